//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the factored SVD, the charts and the
/// process model. Implemented for `f32` and `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    /// Machine epsilon.
    fn eps() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// `max(tol, 16·eps)`, so tolerances stated for `f64` stay meaningful for
    /// narrower types.
    #[inline]
    fn tol(tol: f64) -> Self {
        let floor = Self::eps() * Self::lit(16.0);
        let t = Self::lit(tol);
        if t > floor {
            t
        } else {
            floor
        }
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Scalar for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}
