//! Scalar abstraction shared by every solver component.
//!
//! All numerical code in this crate is written against [`Scalar`], which is
//! implemented for `f32` and `f64`. Tolerances are per type: the `f64` values
//! are the canonical ones, `f32` uses looser values proportional to its
//! machine epsilon.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Primal feasibility tolerance of the simplex kernel.
    const FEASIBILITY_TOL: Self;
    /// Distance from the nearest integer below which a value counts as integral.
    const INTEGRALITY_TOL: Self;
    /// Reduced costs below `-REDUCED_COST_TOL` are treated as strictly negative.
    const REDUCED_COST_TOL: Self;
    /// Tolerance used for pivot elements and optimality checks.
    const PIVOT_TOL: Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const FEASIBILITY_TOL: Self = 1e-7;
    const INTEGRALITY_TOL: Self = 1e-6;
    const REDUCED_COST_TOL: Self = 1e-6;
    const PIVOT_TOL: Self = 1e-9;
}

impl Scalar for f32 {
    const FEASIBILITY_TOL: Self = 1e-4;
    const INTEGRALITY_TOL: Self = 1e-4;
    const REDUCED_COST_TOL: Self = 1e-3;
    const PIVOT_TOL: Self = 1e-6;
}

/// Total order on scalars for sorting; NaN sorts last.
#[inline]
pub(crate) fn total_cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}
