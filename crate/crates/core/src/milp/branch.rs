use super::simplex::solve_with_bounds;
use super::{LinearProgram, LpError, LpStatus};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpStatus {
    /// Search completed; `x` is optimal.
    Optimal,
    Infeasible,
    /// The LP relaxation at the root is unbounded.
    Unbounded,
    /// Node limit reached; `x` is the best incumbent, if any.
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct IpOptions {
    pub node_limit: usize,
}

impl Default for IpOptions {
    fn default() -> Self {
        Self { node_limit: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct IpSolution<T> {
    pub status: IpStatus,
    /// Best integer solution found; empty when there is none.
    pub x: Vec<T>,
    pub objective: T,
    pub nodes: usize,
    /// True when optimality of `x` was proven.
    pub proven: bool,
    /// Incumbent objective after each improvement.
    pub incumbent_history: Vec<T>,
}

impl<T: Scalar> IpSolution<T> {
    pub fn has_solution(&self) -> bool {
        !self.x.is_empty()
    }
}

struct Node<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

/// Depth-first LP-based branch-and-bound, branching on the most fractional
/// integer variable and diving towards its nearer integer first.
pub fn solve_ip<T: Scalar>(
    lp: &LinearProgram<T>,
    integer_vars: &[usize],
    options: &IpOptions,
) -> Result<IpSolution<T>, LpError> {
    lp.validate()?;
    if let Some(&j) = integer_vars.iter().find(|&&j| j >= lp.num_vars()) {
        return Err(LpError::UnknownVariable(j));
    }
    let int_tol = T::INTEGRALITY_TOL;
    let mut is_int = vec![false; lp.num_vars()];
    for &j in integer_vars {
        is_int[j] = true;
    }
    // Integer variables get integral bounds up front.
    let lower: Vec<T> = (0..lp.num_vars())
        .map(|j| if is_int[j] { (lp.lower[j] - int_tol).ceil() } else { lp.lower[j] })
        .collect();
    let upper: Vec<T> = (0..lp.num_vars())
        .map(|j| if is_int[j] { (lp.upper[j] + int_tol).floor() } else { lp.upper[j] })
        .collect();

    let mut best_x: Vec<T> = Vec::new();
    let mut best = T::infinity();
    let mut history = Vec::new();
    let mut nodes = 0usize;
    let mut stack = vec![Node { lower, upper }];
    let mut exhausted = true;

    while let Some(node) = stack.pop() {
        if nodes >= options.node_limit {
            exhausted = false;
            break;
        }
        nodes += 1;
        let sol = solve_with_bounds(lp, &node.lower, &node.upper);
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded if nodes == 1 => {
                return Ok(IpSolution {
                    status: IpStatus::Unbounded,
                    x: Vec::new(),
                    objective: T::neg_infinity(),
                    nodes,
                    proven: false,
                    incumbent_history: history,
                })
            }
            // An unbounded or stalled subproblem cannot be certified; skip it.
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                exhausted = false;
                continue;
            }
        }
        let prune_tol = T::FEASIBILITY_TOL * (T::one() + best.abs());
        if best.is_finite() && sol.objective >= best - prune_tol {
            continue;
        }

        let mut branch_var = None;
        let mut best_frac = T::zero();
        for &j in integer_vars {
            let v = sol.x[j];
            let frac = v - v.floor();
            let dist = frac.min(T::one() - frac);
            if dist > int_tol && (branch_var.is_none() || dist > best_frac) {
                branch_var = Some(j);
                best_frac = dist;
            }
        }

        match branch_var {
            None => {
                let mut x = sol.x;
                for &j in integer_vars {
                    x[j] = x[j].round();
                }
                let obj = lp.objective_value(&x);
                if obj < best {
                    best = obj;
                    best_x = x;
                    history.push(obj);
                }
            }
            Some(j) => {
                let v = sol.x[j];
                let mut down = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                };
                down.upper[j] = v.floor();
                let mut up = node;
                up.lower[j] = v.ceil();
                if v - v.floor() >= T::of(0.5) {
                    stack.push(down);
                    stack.push(up);
                } else {
                    stack.push(up);
                    stack.push(down);
                }
            }
        }
    }

    let status = match (best_x.is_empty(), exhausted) {
        (false, true) => IpStatus::Optimal,
        (true, true) => IpStatus::Infeasible,
        (_, false) => IpStatus::NodeLimit,
    };
    Ok(IpSolution {
        status,
        objective: best,
        x: best_x,
        nodes,
        proven: exhausted,
        incumbent_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Sense;

    #[test]
    fn binary_cover_of_one() {
        let mut lp = LinearProgram::<f64>::new();
        let a = lp.add_var(1.0, 0.0, 1.0);
        let b = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Ge, 1.0);
        let sol = solve_ip(&lp, &[a, b], &IpOptions::default()).unwrap();
        assert_eq!(sol.status, IpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_binary_system() {
        let mut lp = LinearProgram::<f64>::new();
        let a = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(a, 1.0)], Sense::Ge, 1.0);
        lp.add_row(vec![(a, 1.0)], Sense::Le, 0.0);
        let sol = solve_ip(&lp, &[a], &IpOptions::default()).unwrap();
        assert_eq!(sol.status, IpStatus::Infeasible);
        assert!(!sol.has_solution());
    }

    #[test]
    fn fractional_relaxation_needs_branching() {
        // max x + y s.t. 2x + 2y <= 3, binaries: LP 1.5, IP 1.
        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(-1.0, 0.0, 1.0);
        let y = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], Sense::Le, 3.0);
        let sol = solve_ip(&lp, &[x, y], &IpOptions::default()).unwrap();
        assert_eq!(sol.status, IpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
        assert!(sol.nodes > 1);
    }

    #[test]
    fn node_limit_reports_unproven() {
        let mut lp = LinearProgram::<f64>::new();
        let vars: Vec<_> = (0..6).map(|_| lp.add_var(-1.0, 0.0, 1.0)).collect();
        lp.add_row(vars.iter().map(|&v| (v, 2.0)).collect(), Sense::Le, 7.0);
        let sol = solve_ip(&lp, &vars, &IpOptions { node_limit: 1 }).unwrap();
        assert_eq!(sol.status, IpStatus::NodeLimit);
        assert!(!sol.proven);
    }

    #[test]
    fn general_integers() {
        // min -x - 2y, x + 3y <= 7.5, x <= 4.2, integers -> x=4, y=1 (-6).
        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(-1.0, 0.0, 4.2);
        let y = lp.add_var(-2.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, 3.0)], Sense::Le, 7.5);
        let sol = solve_ip(&lp, &[x, y], &IpOptions::default()).unwrap();
        assert!((sol.objective + 6.0).abs() < 1e-9, "{}", sol.objective);
    }
}
