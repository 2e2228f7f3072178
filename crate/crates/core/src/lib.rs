//! Monostatic MIMO-OFDM sensing simulator: echo synthesis, MUSIC angle
//! estimation, LS spatial separation, coherent compensation, range-Doppler
//! maps, CFAR detection, and closed-form SINR predictions to check them
//! against.
//!
//! The signal chain is generic over [`Real`] (`f32` or `f64`); the aliases
//! below pin the common instantiations.

pub mod array;
pub mod channel;
pub mod doa;
pub mod error;
pub mod linalg;
pub mod numerology;
pub mod scalar;
pub mod sensing;
pub mod theory;
pub mod waveform;

pub use error::{Error, Result};
pub use numerology::{ArrayGeometry, OfdmNumerology, Scenario, Target, C0};
pub use scalar::Real;

pub use num_complex::Complex;

pub type Complex64 = Complex<f64>;
pub type Complex32 = Complex<f32>;

pub type SymbolGrid64 = waveform::SymbolGrid<f64>;
pub type SymbolGrid32 = waveform::SymbolGrid<f32>;
pub type TimeSignal64 = waveform::TimeSignal<f64>;
pub type TimeSignal32 = waveform::TimeSignal<f32>;
pub type Ofdm64 = waveform::Ofdm<f64>;
pub type Ofdm32 = waveform::Ofdm<f32>;
pub type MultiAntennaSignal64 = channel::MultiAntennaSignal<f64>;
pub type MultiAntennaSignal32 = channel::MultiAntennaSignal<f32>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type RangeDopplerMap64 = sensing::RangeDopplerMap<f64>;
pub type RangeDopplerMap32 = sensing::RangeDopplerMap<f32>;
pub type SeparationOperator64 = array::SeparationOperator<f64>;
pub type SeparationOperator32 = array::SeparationOperator<f32>;
