//! Real scalar abstraction: f32 or f64.

use nalgebra::RealField;
use num_traits::FromPrimitive;

/// Real field the whole crate is generic over.
///
/// `RealField` brings the transcendental functions, `FromPrimitive` the
/// literal conversions. Implemented by `f32` and `f64`.
pub trait Scalar: RealField + FromPrimitive + Copy + Default {}

impl<T> Scalar for T where T: RealField + FromPrimitive + Copy + Default {}

/// Convert an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Convert the working scalar into `f64` (for reporting and CSV output).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    let approx: f64 = nalgebra::try_convert(x).unwrap_or(f64::NAN);
    approx
}
