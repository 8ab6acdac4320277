use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the library is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Smallest pair distance used by the unbounded (inverse power) potentials.
    const DISTANCE_FLOOR: f64;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn distance_floor() -> Self {
        Self::lit(Self::DISTANCE_FLOOR)
    }
}

impl Scalar for f64 {
    const DISTANCE_FLOOR: f64 = 1e-12;
}

// 1e-12 raised to the fourth power underflows in single precision.
impl Scalar for f32 {
    const DISTANCE_FLOOR: f64 = 1e-6;
}
