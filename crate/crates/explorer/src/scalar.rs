//! Scalar abstraction for the numeric core.
//!
//! All math modules are generic over [`Real`]; the crate root exports f64
//! aliases for the concrete types used by the pipeline and the CLI.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numeric core: f32 or f64.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum {}

impl<T> Real for T where T: RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum
{}

/// Convert an f64 constant into the working scalar type.
#[inline]
pub fn fromf<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Convert the working scalar into f64 (for RNG plumbing and reporting).
#[inline]
pub fn tof<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar not representable as f64")
}

/// Finite check that works for any [`Real`] without pulling in `Float`.
#[inline]
pub fn is_finite<T: Real>(x: T) -> bool {
    x.to_f64().map_or(false, f64::is_finite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_check_rejects_nan_and_inf() {
        assert!(is_finite(1.5f64));
        assert!(is_finite(1.5f32));
        assert!(!is_finite(f64::NAN));
        assert!(!is_finite(f32::INFINITY));
        assert!(!is_finite(f64::NEG_INFINITY));
    }

    #[test]
    fn conversion_round_trip() {
        let x: f32 = fromf(0.25);
        assert_eq!(x, 0.25f32);
        assert_eq!(tof(0.25f64), 0.25);
    }
}
