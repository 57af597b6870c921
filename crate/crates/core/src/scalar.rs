//! Floating-point abstraction shared by every numeric routine in the crate.

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rustfft::FftNum;

/// Scalar type the library is generic over. Implemented for `f32` and `f64`.
///
/// Training runs in `f32` for throughput; gradient audits run in `f64`.
pub trait Float: NdFloat + FromPrimitive + FftNum + Default + Sum {
    /// Lossy conversion from an `f64` literal or configuration value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every supported float type")
    }

    /// Widening conversion used for logging and serialization.
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Name written into checkpoint and dataset headers.
    const DTYPE: &'static str;
}

impl Float for f32 {
    const DTYPE: &'static str = "f32";
}

impl Float for f64 {
    const DTYPE: &'static str = "f64";
}
