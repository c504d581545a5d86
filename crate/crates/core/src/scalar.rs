//! Scalar abstraction shared by every numerical module.
//!
//! All model types, the simplex solver, the planner and the learners are
//! generic over [`Scalar`]. Only `f32` and `f64` implement it; tolerances are
//! part of the trait because a stochasticity check at `1e-12` is meaningless
//! in single precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Tolerance for "sums to one" and nonnegativity of stored distributions.
    fn dist_tol() -> Self;
    /// Absolute feasibility / optimality tolerance of the simplex solver.
    fn lp_tol() -> Self;
    /// Tolerance used when a receiver decides whether a recommendation is obeyed.
    fn obey_tol() -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("index fits in scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn dist_tol() -> Self {
        1e-12
    }
    fn lp_tol() -> Self {
        1e-9
    }
    fn obey_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn dist_tol() -> Self {
        1e-5
    }
    fn lp_tol() -> Self {
        1e-5
    }
    fn obey_tol() -> Self {
        1e-5
    }
}

/// Index of the largest entry, lowest index on ties (ties within `tol`).
pub fn argmax_lowest<T: Scalar>(values: &[T], tol: T) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + tol {
            best = i;
        }
    }
    best
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn l1_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
