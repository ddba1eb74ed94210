//! Small dense LP/IP kernel: a bounded primal simplex that reports row duals,
//! and a depth-first LP-based branch-and-bound on top of it.
//!
//! All problems are minimisations. Variables carry a finite lower bound and
//! an optional (possibly infinite) upper bound.

mod branch;
mod simplex;

pub use branch::{solve_ip, IpOptions, IpSolution, IpStatus};
pub use simplex::solve_lp;

use crate::num::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub rows: Vec<Constraint<T>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("variable {0} out of range")]
    UnknownVariable(usize),
    #[error("variable {0} has a non-finite lower bound or an upper bound below it")]
    BadBounds(usize),
    #[error("non-finite coefficient in row {0}")]
    NonFinite(usize),
}

impl<T: Scalar> Default for LinearProgram<T> {
    fn default() -> Self {
        Self {
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: T, lower: T, upper: T) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, sense: Sense, rhs: T) -> usize {
        self.rows.push(Constraint { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || u.is_nan() || u < l || !self.objective[j].is_finite() {
                return Err(LpError::BadBounds(j));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(i));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::UnknownVariable(j));
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(i));
                }
            }
        }
        Ok(())
    }

    /// `sum_j a_ij x_j` for row `i`.
    pub fn row_activity(&self, i: usize, x: &[T]) -> T {
        self.rows[i].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(i, x);
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
    /// Row duals `y` with `c - A^T y` the reduced costs; `>= 0` on `Ge`
    /// rows and `<= 0` on `Le` rows at optimality.
    pub duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Objective of the dual solution implied by `duals` and `reduced_costs`:
    /// `b^T y + sum_j (l_j max(d_j, 0) + u_j min(d_j, 0))`.
    pub fn dual_objective(&self, lp: &LinearProgram<T>) -> T {
        let mut z: T = lp.rows.iter().zip(&self.duals).map(|(r, &y)| r.rhs * y).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > T::zero() {
                z += lp.lower[j] * d;
            } else if d < T::zero() && lp.upper[j].is_finite() {
                z += lp.upper[j] * d;
            }
        }
        z
    }
}
