use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the estimators are written against.
///
/// Linear algebra goes through nalgebra's `RealField`; conversions to and
/// from literals and `f64` go through num-traits. Implemented for `f32` and
/// `f64`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. Infallible for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
