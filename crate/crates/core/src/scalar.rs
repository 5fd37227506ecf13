//! Scalar abstraction shared by the numeric parts of the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar used for weights, couplings, metrics and scores.
///
/// Implemented for `f32` and `f64`. The crate root re-exports `f64`
/// instantiations of the generic types under plain names.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ceiling of `x` that ignores float noise just above an integer,
/// so `(1.0 - 0.6) / 0.2` counts as 2 and not 3.
pub(crate) fn robust_ceil<S: Scalar>(x: S) -> S {
    let tol = S::lit(1e-6);
    (x - tol).ceil().max(S::zero())
}
