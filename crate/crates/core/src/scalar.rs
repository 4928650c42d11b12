use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the geometry, loss, and simulator math is generic
/// over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Cast from `f64`, rounding to the nearest representable value.
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }

    /// Widen to `f64` for reporting and formatting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Exact-enough conversion of a count for ratio arithmetic.
    fn from_count(count: usize) -> Self {
        Self::cast(count as f64)
    }

    fn half() -> Self {
        Self::cast(0.5)
    }

    fn two() -> Self {
        Self::cast(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
