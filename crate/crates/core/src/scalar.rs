//! Floating-point abstraction.
//!
//! The numeric core is generic over [`Scalar`] so the same code paths run in
//! the default 32-bit regime and in the 64-bit regime used by validation
//! oracles. Accumulations that are sensitive to rounding (force sums, centers
//! of mass, normalization constants) are always carried out in `f64`
//! regardless of the storage scalar.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Storage scalar for coordinates, affinities, and distances.
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
