//! Scalar abstraction: the whole library is generic over the floating-point
//! type through [`Scalar`], with `f64` as the intended production type.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library (`f32` or `f64`).
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Scalar for T where T: RealField + FromPrimitive + ToPrimitive + Copy {}

/// Gravitational acceleration [m/s²].
pub const STANDARD_GRAVITY: f64 = 9.805;

/// Reynolds number at the laminar/turbulent switch.
pub const LAMINAR_TURBULENT_REYNOLDS: f64 = 2300.0;

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal not representable in scalar type")
}

#[inline]
pub(crate) fn gravity<T: Scalar>() -> T {
    lit(STANDARD_GRAVITY)
}

/// Lossy view of a scalar for diagnostics.
#[inline]
pub(crate) fn as_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_convert_to_both_float_widths() {
        assert_eq!(lit::<f64>(0.25), 0.25);
        assert_eq!(lit::<f32>(0.25), 0.25f32);
        assert_eq!(gravity::<f64>(), STANDARD_GRAVITY);
    }
}
