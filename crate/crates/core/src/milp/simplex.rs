use super::{LinearProgram, LpError, LpSolution, LpStatus, Sense};
use crate::num::Scalar;

const NONE: usize = usize::MAX;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;
/// Pivots between refactorizations of the tableau.
const REFACTOR_EVERY: usize = 200;

pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    lp.validate()?;
    Ok(solve_with_bounds(lp, &lp.lower, &lp.upper))
}

/// Solves `lp` with the given variable bounds in place of its own. Bounds
/// must be finite below; `lower > upper` yields `Infeasible`.
pub(crate) fn solve_with_bounds<T: Scalar>(
    lp: &LinearProgram<T>,
    lower: &[T],
    upper: &[T],
) -> LpSolution<T> {
    let n = lp.num_vars();
    let m = lp.rows.len();
    if lower.iter().zip(upper).any(|(&l, &u)| l > u) {
        return LpSolution {
            status: LpStatus::Infeasible,
            x: lower.to_vec(),
            objective: T::nan(),
            duals: vec![T::zero(); m],
            reduced_costs: vec![T::zero(); n],
            iterations: 0,
        };
    }
    let mut tab = Tableau::new(lp, lower, upper);
    let status = tab.solve(lp);
    tab.extract(lp, lower, status)
}

struct Tableau<T> {
    m: usize,
    n: usize,
    ncols: usize,
    art_start: usize,
    /// Original (shifted) constraint matrix, row-major `m x ncols`.
    a0: Vec<T>,
    rhs: Vec<T>,
    /// Current tableau `B^-1 A`, row-major.
    tab: Vec<T>,
    d: Vec<T>,
    cost: Vec<T>,
    beta: Vec<T>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    ub: Vec<T>,
    at_upper: Vec<bool>,
    sigma: Vec<T>,
    iterations: usize,
    since_refactor: usize,
}

impl<T: Scalar> Tableau<T> {
    fn new(lp: &LinearProgram<T>, lower: &[T], upper: &[T]) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let num_slack = lp.rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let art_start = n + num_slack;
        let ncols = art_start + m;

        let mut a0 = vec![T::zero(); m * ncols];
        let mut rhs = vec![T::zero(); m];
        let mut ub = vec![T::infinity(); ncols];
        for j in 0..n {
            ub[j] = upper[j] - lower[j];
        }
        let mut basis = vec![NONE; m];
        let mut row_of = vec![NONE; ncols];
        let mut sigma = vec![T::one(); m];
        let mut beta = vec![T::zero(); m];

        let mut slack = n;
        for (i, row) in lp.rows.iter().enumerate() {
            let r = &mut a0[i * ncols..(i + 1) * ncols];
            let mut b = row.rhs;
            for &(j, v) in &row.coeffs {
                r[j] += v;
                b -= v * lower[j];
            }
            rhs[i] = b;
            let slack_col = match row.sense {
                Sense::Le => {
                    r[slack] = T::one();
                    Some((slack, T::one()))
                }
                Sense::Ge => {
                    r[slack] = -T::one();
                    Some((slack, -T::one()))
                }
                Sense::Eq => None,
            };
            if slack_col.is_some() {
                slack += 1;
            }
            let art = art_start + i;
            match slack_col {
                Some((s, sign)) if b * sign >= T::zero() => {
                    sigma[i] = sign;
                    basis[i] = s;
                    row_of[s] = i;
                    ub[art] = T::zero();
                }
                _ => {
                    sigma[i] = if b >= T::zero() { T::one() } else { -T::one() };
                    basis[i] = art;
                    row_of[art] = i;
                }
            }
            r[art] = sigma[i];
            beta[i] = b * sigma[i];
        }

        let mut tab = a0.clone();
        for i in 0..m {
            let s = sigma[i];
            if s < T::zero() {
                for v in &mut tab[i * ncols..(i + 1) * ncols] {
                    *v *= s;
                }
            }
        }

        Self {
            m,
            n,
            ncols,
            art_start,
            a0,
            rhs,
            tab,
            d: vec![T::zero(); ncols],
            cost: vec![T::zero(); ncols],
            beta,
            basis,
            row_of,
            ub,
            at_upper: vec![false; ncols],
            sigma,
            iterations: 0,
            since_refactor: 0,
        }
    }

    #[inline]
    fn nonbasic_value(&self, j: usize) -> T {
        if self.at_upper[j] {
            self.ub[j]
        } else {
            T::zero()
        }
    }

    fn set_costs(&mut self, cost: Vec<T>) {
        self.cost = cost;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        let nc = self.ncols;
        self.d.copy_from_slice(&self.cost);
        for k in 0..self.m {
            let cb = self.cost[self.basis[k]];
            if cb != T::zero() {
                let row = &self.tab[k * nc..(k + 1) * nc];
                for (dj, &t) in self.d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
    }

    fn solve(&mut self, lp: &LinearProgram<T>) -> LpStatus {
        let limit = 20_000 + 50 * (self.m + self.ncols);

        // Phase 1: drive artificials to zero.
        let mut phase1 = vec![T::zero(); self.ncols];
        let mut needs_phase1 = false;
        for i in 0..self.m {
            let art = self.art_start + i;
            if self.ub[art] > T::zero() {
                phase1[art] = T::one();
                needs_phase1 = true;
            }
        }
        if needs_phase1 {
            self.set_costs(phase1);
            match self.iterate(limit) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => unreachable!("phase one objective is bounded below"),
                other => return other,
            }
            self.refactor();
            let infeas: T = (0..self.m)
                .filter(|&i| self.basis[i] >= self.art_start)
                .map(|i| self.beta[i].max(T::zero()))
                .sum();
            let scale = T::one() + self.rhs.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
            if infeas > T::FEASIBILITY_TOL * scale {
                return LpStatus::Infeasible;
            }
            for art in self.art_start..self.ncols {
                self.ub[art] = T::zero();
                self.at_upper[art] = false;
            }
        }

        let mut cost = vec![T::zero(); self.ncols];
        cost[..self.n].copy_from_slice(&lp.objective);
        self.set_costs(cost);
        let status = self.iterate(limit);
        if status == LpStatus::Optimal {
            self.refactor();
        }
        status
    }

    /// Primal simplex iterations on the current cost vector.
    fn iterate(&mut self, limit: usize) -> LpStatus {
        let tol = T::PIVOT_TOL;
        let nc = self.ncols;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_LIMIT;

            // Entering variable.
            let mut enter = NONE;
            let mut best = T::zero();
            for j in 0..nc {
                if self.row_of[j] != NONE || self.ub[j] <= T::zero() {
                    continue;
                }
                let score = if self.at_upper[j] { self.d[j] } else { -self.d[j] };
                if score > tol && (enter == NONE || (!bland && score > best)) {
                    enter = j;
                    best = score;
                    if bland {
                        break;
                    }
                }
            }
            if enter == NONE {
                return LpStatus::Optimal;
            }
            let dir = if self.at_upper[enter] { -T::one() } else { T::one() };

            // Ratio test.
            let mut theta = self.ub[enter];
            let mut leave_row = NONE;
            let mut leave_to_upper = false;
            let mut best_alpha = T::zero();
            for i in 0..self.m {
                let alpha = self.tab[i * nc + enter];
                if alpha.abs() <= tol {
                    continue;
                }
                let b = self.basis[i];
                let rate = -dir * alpha;
                let (limit_i, to_upper) = if rate < T::zero() {
                    (self.beta[i].max(T::zero()) / (-rate), false)
                } else if self.ub[b].is_finite() {
                    ((self.ub[b] - self.beta[i]).max(T::zero()) / rate, true)
                } else {
                    continue;
                };
                let take = if limit_i < theta {
                    true
                } else if limit_i > theta {
                    false
                } else if leave_row == NONE {
                    // Prefer a pivot over a bound flip of equal length.
                    true
                } else if bland {
                    b < self.basis[leave_row]
                } else {
                    alpha.abs() > best_alpha
                };
                if take {
                    theta = limit_i;
                    leave_row = i;
                    leave_to_upper = to_upper;
                    best_alpha = alpha.abs();
                }
            }
            if theta.is_infinite() {
                return LpStatus::Unbounded;
            }
            self.iterations += 1;
            if theta <= tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            // Update basic values.
            if theta > T::zero() {
                for i in 0..self.m {
                    let alpha = self.tab[i * nc + enter];
                    if alpha != T::zero() {
                        self.beta[i] -= dir * alpha * theta;
                    }
                }
            }

            if leave_row == NONE {
                // Bound flip.
                self.at_upper[enter] = !self.at_upper[enter];
                continue;
            }

            let entering_value = self.nonbasic_value(enter) + dir * theta;
            let leaving = self.basis[leave_row];
            self.pivot(leave_row, enter);
            self.beta[leave_row] = entering_value;
            self.at_upper[enter] = false;
            self.at_upper[leaving] = leave_to_upper;

            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
        }
    }

    fn pivot(&mut self, r: usize, enter: usize) {
        let nc = self.ncols;
        let piv = self.tab[r * nc + enter];
        let inv = T::one() / piv;
        for v in &mut self.tab[r * nc..(r + 1) * nc] {
            *v *= inv;
        }
        self.tab[r * nc + enter] = T::one();
        let (before, rest) = self.tab.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for row in before.chunks_exact_mut(nc).chain(after.chunks_exact_mut(nc)) {
            let f = row[enter];
            if f != T::zero() {
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[enter] = T::zero();
            }
        }
        let f = self.d[enter];
        if f != T::zero() {
            for (v, &p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[enter] = T::zero();
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = NONE;
        self.basis[r] = enter;
        self.row_of[enter] = r;
    }

    /// Rebuilds `B^-1 A`, basic values and reduced costs from the original
    /// matrix to shed accumulated rounding error.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let (m, nc) = (self.m, self.ncols);
        if m == 0 {
            self.recompute_reduced_costs();
            return;
        }
        // Gauss-Jordan on [B | A0 | r] with partial pivoting.
        let w = nc + 1;
        let mut aug = vec![T::zero(); m * (m + w)];
        let stride = m + w;
        let mut r = self.rhs.clone();
        for j in 0..nc {
            if self.row_of[j] == NONE && self.at_upper[j] {
                let u = self.ub[j];
                for i in 0..m {
                    r[i] -= self.a0[i * nc + j] * u;
                }
            }
        }
        for i in 0..m {
            for k in 0..m {
                aug[i * stride + k] = self.a0[i * nc + self.basis[k]];
            }
            aug[i * stride + m..i * stride + m + nc].copy_from_slice(&self.a0[i * nc..(i + 1) * nc]);
            aug[i * stride + m + nc] = r[i];
        }
        for col in 0..m {
            let mut p = col;
            for i in col + 1..m {
                if aug[i * stride + col].abs() > aug[p * stride + col].abs() {
                    p = i;
                }
            }
            if aug[p * stride + col].abs() <= T::epsilon() {
                // Singular basis: keep the current tableau.
                self.recompute_reduced_costs();
                return;
            }
            if p != col {
                for k in 0..stride {
                    aug.swap(p * stride + k, col * stride + k);
                }
            }
            let inv = T::one() / aug[col * stride + col];
            for k in 0..stride {
                aug[col * stride + k] *= inv;
            }
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = aug[i * stride + col];
                if f != T::zero() {
                    for k in 0..stride {
                        let v = aug[col * stride + k];
                        aug[i * stride + k] -= f * v;
                    }
                }
            }
        }
        // Row `k` of the reduced system now belongs to basis position `k`.
        for k in 0..m {
            self.tab[k * nc..(k + 1) * nc].copy_from_slice(&aug[k * stride + m..k * stride + m + nc]);
            self.beta[k] = aug[k * stride + m + nc];
            let b = self.basis[k];
            self.tab[k * nc + b] = T::one();
        }
        self.recompute_reduced_costs();
    }

    fn extract(&self, lp: &LinearProgram<T>, lower: &[T], status: LpStatus) -> LpSolution<T> {
        let mut x: Vec<T> = (0..self.n)
            .map(|j| {
                let v = match self.row_of[j] {
                    NONE => self.nonbasic_value(j),
                    r => self.beta[r],
                };
                lower[j] + v
            })
            .collect();
        // Clip tiny bound violations left by rounding.
        for (j, v) in x.iter_mut().enumerate() {
            let hi = lower[j] + self.ub[j];
            if *v < lower[j] {
                *v = lower[j];
            } else if *v > hi {
                *v = hi;
            }
        }
        let objective = lp.objective_value(&x);
        let duals = (0..self.m)
            .map(|i| -self.sigma[i] * self.d[self.art_start + i])
            .collect();
        LpSolution {
            status,
            objective,
            x,
            duals,
            reduced_costs: self.d[..self.n].to_vec(),
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinearProgram, Sense};

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(approx(sol.x[0], 3.0));
        assert!(approx(sol.duals[0], 1.0));
    }

    #[test]
    fn separable_covering() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(1.0, 0.0, f64::INFINITY);
        let b = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(a, 1.0)], Sense::Ge, 1.0);
        lp.add_row(vec![(b, 1.0)], Sense::Ge, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective, 2.0));
        assert!(approx(sol.duals[0], 1.0) && approx(sol.duals[1], 1.0));
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6).
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-3.0, 0.0, f64::INFINITY);
        let y = lp.add_var(-5.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Sense::Le, 4.0);
        lp.add_row(vec![(y, 2.0)], Sense::Le, 12.0);
        lp.add_row(vec![(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective, -36.0));
        assert!(approx(sol.x[0], 2.0) && approx(sol.x[1], 6.0));
        assert!(approx(sol.duals[0], 0.0));
        assert!(approx(sol.duals[1], -1.5));
        assert!(approx(sol.duals[2], -1.0));
        assert!(approx(sol.dual_objective(&lp), sol.objective));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_shifted_bounds() {
        // min x + 2y, x + y = 5, x in [1, 3], y in [-1, 10].
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 1.0, 3.0);
        let y = lp.add_var(2.0, -1.0, 10.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 5.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.x[0], 3.0) && approx(sol.x[1], 2.0));
        assert!(approx(sol.objective, 7.0));
        assert!(approx(sol.duals[0], 2.0));
        assert!(approx(sol.dual_objective(&lp), 7.0));
    }

    #[test]
    fn upper_bounds_via_flips() {
        // min -x - y with x, y in [0, 1] and x + y <= 1.5.
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, 1.0);
        let y = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective, -1.5));
    }

    #[test]
    fn rejects_bad_model() {
        let mut lp = LinearProgram::<f64>::new();
        lp.add_var(1.0, f64::NEG_INFINITY, 0.0);
        assert_eq!(solve_lp(&lp), Err(LpError::BadBounds(0)));
        let mut lp = LinearProgram::<f64>::new();
        lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(3, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp), Err(LpError::UnknownVariable(3)));
    }

    #[test]
    fn single_precision_covering() {
        let mut lp = LinearProgram::<f32>::new();
        let a = lp.add_var(2.0, 0.0, f32::INFINITY);
        let b = lp.add_var(3.0, 0.0, f32::INFINITY);
        let c = lp.add_var(4.0, 0.0, f32::INFINITY);
        lp.add_row(vec![(a, 1.0), (c, 1.0)], Sense::Ge, 1.0);
        lp.add_row(vec![(b, 1.0), (c, 1.0)], Sense::Ge, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective - 4.0).abs() < 1e-4);
    }
}
