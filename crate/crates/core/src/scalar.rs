//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the design math is written against.
///
/// Implemented for `f32` and `f64`. Everything that reaches a user (tables,
/// JSON, CSV) is produced by the `f64` instantiation; `f32` exists for
/// memory-light bulk simulation and to keep the math honest about precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Infallible for the implementing types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Tolerance used to decide exact ties between computed probabilities.
    fn tie_tolerance() -> Self;

    /// Convergence tolerance for iterative special-function evaluation.
    fn series_tolerance() -> Self;
}

impl Real for f64 {
    fn tie_tolerance() -> Self {
        1e-12
    }

    fn series_tolerance() -> Self {
        1e-15
    }
}

impl Real for f32 {
    fn tie_tolerance() -> Self {
        1e-6
    }

    fn series_tolerance() -> Self {
        1e-7
    }
}
