//! Floating-point scalar abstraction shared by every signal-processing
//! module. Everything below the harness is generic over [`Real`] so the same
//! chain can run in `f32` (half the memory per frame) or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// f32 or f64.
pub trait Real:
    Float + FloatConst + FftNum + NumAssign + Default + Display + Debug + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or physical constant into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 is representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{j·phase}`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, s)
}

/// Power (magnitude squared) averaged over a slice.
pub fn mean_power<T: Real>(xs: &[Complex<T>]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().map(|z| z.norm_sqr()).sum::<T>() / T::from_count(xs.len())
}

#[inline]
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[inline]
pub fn from_db(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Round half to even, matching the nearest-integer rounding used for
/// delay quantization.
#[inline]
pub fn round_even(x: f64) -> f64 {
    x.round_ties_even()
}
