//! Gray-coded 16-QAM payloads and CP-OFDM modulation/demodulation with
//! unitary (1/√Nc) DFT scaling in both directions.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numerology::OfdmNumerology;
use crate::scalar::Real;

/// Per-axis Gray levels indexed by the two-bit value `b0·2 + b1`.
const GRAY_LEVELS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

fn gray_level(b0: bool, b1: bool) -> f64 {
    GRAY_LEVELS[(b0 as usize) << 1 | b1 as usize]
}

fn qam16_index_point<T: Real>(idx: usize) -> Complex<T> {
    let re = gray_level(idx & 8 != 0, idx & 4 != 0);
    let im = gray_level(idx & 2 != 0, idx & 1 != 0);
    let scale = 1.0 / 10f64.sqrt();
    Complex::new(T::lit(re * scale), T::lit(im * scale))
}

/// The 16 unit-average-power constellation points, in bit-label order.
pub fn qam16_points<T: Real>() -> [Complex<T>; 16] {
    std::array::from_fn(qam16_index_point)
}

/// Maps groups of four bits (I pair first) to Gray-coded 16-QAM points.
pub fn qam16_map<T: Real>(bits: &[bool]) -> Result<Vec<Complex<T>>> {
    if !bits.len().is_multiple_of(4) {
        return Err(Error::InvalidParameter(format!(
            "16-QAM needs a multiple of 4 bits, got {}",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(4)
        .map(|b| {
            let idx = (b[0] as usize) << 3 | (b[1] as usize) << 2 | (b[2] as usize) << 1 | b[3] as usize;
            qam16_index_point(idx)
        })
        .collect())
}

/// `E[|1/S|²]` over the unit-power 16-QAM alphabet, by enumeration. Equals 17/9.
pub fn mean_inverse_power() -> f64 {
    qam16_points::<f64>().iter().map(|s| 1.0 / s.norm_sqr()).sum::<f64>() / 16.0
}

/// Frequency-domain payload, stored symbol-major: entry `(m, k)` lives at
/// `data[m * nc + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid<T> {
    nc: usize,
    m: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> SymbolGrid<T> {
    pub fn zeros(nc: usize, m: usize) -> Self {
        Self {
            nc,
            m,
            data: vec![Complex::default(); nc * m],
        }
    }

    pub fn from_vec(nc: usize, m: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != nc * m {
            return Err(Error::Dimension(format!(
                "grid {nc}x{m} needs {} entries, got {}",
                nc * m,
                data.len()
            )));
        }
        Ok(Self { nc, m, data })
    }

    /// I.i.d. uniform 16-QAM symbols.
    pub fn random_qam16<R: Rng + ?Sized>(nc: usize, m: usize, rng: &mut R) -> Self {
        let points = qam16_points::<T>();
        let data = (0..nc * m).map(|_| points[rng.random_range(0..16)]).collect();
        Self { nc, m, data }
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, m: usize, k: usize) -> Complex<T> {
        self.data[m * self.nc + k]
    }

    pub fn symbol(&self, m: usize) -> &[Complex<T>] {
        &self.data[m * self.nc..(m + 1) * self.nc]
    }

    pub fn symbol_mut(&mut self, m: usize) -> &mut [Complex<T>] {
        &mut self.data[m * self.nc..(m + 1) * self.nc]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn energy(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal<T> {
    pub samples: Vec<Complex<T>>,
    /// Hz.
    pub sample_rate: f64,
    /// Time of sample 0, s.
    pub t0: f64,
}

impl<T: Real> TimeSignal<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// OFDM modulator/demodulator holding FFT plans for one numerology.
#[derive(Clone)]
pub struct Ofdm<T: Real> {
    num: OfdmNumerology,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    norm: T,
}

impl<T: Real> std::fmt::Debug for Ofdm<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ofdm").field("num", &self.num).finish_non_exhaustive()
    }
}

impl<T: Real> Ofdm<T> {
    pub fn new(num: &OfdmNumerology) -> Result<Self> {
        num.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            num: *num,
            forward: planner.plan_fft_forward(num.nc),
            inverse: planner.plan_fft_inverse(num.nc),
            norm: T::one() / T::from_count(num.nc).sqrt(),
        })
    }

    pub fn numerology(&self) -> &OfdmNumerology {
        &self.num
    }

    /// Unitary forward DFT in place; `buf.len()` must equal Nc.
    pub fn dft(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|z| *z = z.scale(self.norm));
    }

    /// Unitary inverse DFT in place.
    pub fn idft(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|z| *z = z.scale(self.norm));
    }

    pub fn modulate(&self, grid: &SymbolGrid<T>) -> Result<TimeSignal<T>> {
        let (nc, m) = (self.num.nc, self.num.m);
        if grid.nc() != nc || grid.m() != m {
            return Err(Error::Dimension(format!(
                "grid is {}x{}, numerology wants {nc}x{m}",
                grid.nc(),
                grid.m()
            )));
        }
        let cp = self.num.cp_samples();
        let block = nc + cp;
        let mut samples = vec![Complex::default(); m * block];
        for (sym, out) in samples.chunks_exact_mut(block).enumerate() {
            let (head, body) = out.split_at_mut(cp);
            body.copy_from_slice(grid.symbol(sym));
            self.idft(body);
            head.copy_from_slice(&body[nc - cp..]);
        }
        Ok(TimeSignal {
            samples,
            sample_rate: self.num.sample_rate(),
            t0: 0.0,
        })
    }

    /// Start index of symbol `n`'s CP-stripped receive window.
    pub fn window_start(&self, n: usize) -> usize {
        n * self.num.block_len() + self.num.cp_samples()
    }

    /// DFT of the Nc samples that follow the cyclic prefix of block `n`.
    pub fn demod_window(&self, sig: &[Complex<T>], n: usize) -> Result<Vec<Complex<T>>> {
        let start = self.window_start(n);
        let end = start + self.num.nc;
        if end > sig.len() {
            return Err(Error::OutOfBounds(format!(
                "symbol {n} window [{start}, {end}) exceeds signal length {}",
                sig.len()
            )));
        }
        let mut buf = sig[start..end].to_vec();
        self.dft(&mut buf);
        Ok(buf)
    }

    /// Demodulates every symbol of a frame with no compensation.
    pub fn demodulate(&self, sig: &[Complex<T>]) -> Result<SymbolGrid<T>> {
        let mut grid = SymbolGrid::zeros(self.num.nc, self.num.m);
        for n in 0..self.num.m {
            let sym = self.demod_window(sig, n)?;
            grid.symbol_mut(n).copy_from_slice(&sym);
        }
        Ok(grid)
    }
}

pub fn ofdm_modulate<T: Real>(grid: &SymbolGrid<T>, num: &OfdmNumerology) -> Result<TimeSignal<T>> {
    Ofdm::new(num)?.modulate(grid)
}

pub fn ofdm_demod_window<T: Real>(
    sig: &[Complex<T>],
    n: usize,
    num: &OfdmNumerology,
) -> Result<Vec<Complex<T>>> {
    Ofdm::new(num)?.demod_window(sig, n)
}
