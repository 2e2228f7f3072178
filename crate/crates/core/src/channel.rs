//! Multi-target echo synthesis: integer-sample delay, per-sample Doppler,
//! free-space two-way attenuation, receive steering and CSCG noise.
//!
//! Two synthesis paths exist. [`synthesize_rx`] materializes the full
//! `Nr × frame` receive matrix. [`EchoField`] keeps one scalar stream per
//! target and produces any linear projection `W·rx` directly, with noise of
//! the matching covariance `σ²·W·Wᴴ`; this is what the Monte-Carlo harness
//! uses, because every receiver it runs is linear in `rx`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::array::{dot, ls_beamformer, rx_steering, tx_steering, Side};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, CMatrix};
use crate::numerology::{sample_offsets, OfdmNumerology, SampleOffsets, Scenario, Target, C0};
use crate::scalar::{cis, Real};
use crate::waveform::TimeSignal;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// `k·T·B` scaled by the noise figure.
    Thermal { temperature_k: f64, noise_figure_db: f64 },
    /// Per-antenna noise power in watts.
    Explicit { sigma2: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Thermal {
            temperature_k: 290.0,
            noise_figure_db: 7.0,
        }
    }
}

impl NoiseSpec {
    pub fn sigma2(&self, bandwidth: f64) -> f64 {
        match *self {
            NoiseSpec::Thermal {
                temperature_k,
                noise_figure_db,
            } => BOLTZMANN * temperature_k * bandwidth * 10f64.powf(noise_figure_db / 10.0),
            NoiseSpec::Explicit { sigma2 } => sigma2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Thermal {
                temperature_k,
                noise_figure_db,
            } => temperature_k.is_finite() && temperature_k > 0.0 && noise_figure_db.is_finite(),
            NoiseSpec::Explicit { sigma2 } => sigma2.is_finite() && sigma2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("noise spec {self:?} does not give a positive σ²")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attenuation {
    /// `α̃ = √(PtGtGr/Nt)·α·β·e^{−j2πfcτ}`.
    pub complex_gain: Complex<f64>,
    pub rcs: f64,
    /// `|β| = √(λ²/((4π)³d⁴))`.
    pub path_loss: f64,
    pub phase: Complex<f64>,
    /// `√(PtGtGr/Nt)`.
    pub power_scale: f64,
}

pub fn attenuation_of(target: &Target, scenario: &Scenario) -> Attenuation {
    let lambda = scenario.numerology.wavelength();
    let four_pi = 4.0 * std::f64::consts::PI;
    let path_loss = (lambda * lambda / (four_pi.powi(3) * target.range.powi(4))).sqrt();
    let power_scale = (scenario.pt_watts() * scenario.gt_linear() * scenario.gr_linear()
        / scenario.geometry.nt as f64)
        .sqrt();
    let tau = 2.0 * target.range / C0;
    // Reduce fc·τ modulo one cycle before forming the phase.
    let cycles = (scenario.numerology.fc * tau).fract();
    let phase = Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * cycles);
    Attenuation {
        complex_gain: phase * (power_scale * target.rcs * path_loss),
        rcs: target.rcs,
        path_loss,
        phase,
        power_scale,
    }
}

/// Everything needed to synthesize one target's echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEcho {
    pub index: usize,
    pub angle: f64,
    pub offsets: SampleOffsets,
    /// Hz.
    pub doppler: f64,
    pub attenuation: Attenuation,
    /// `aᵀ(θ_u)·w_tx` with the transmit beam steered at target 0.
    pub tx_gain: Complex<f64>,
}

impl TargetEcho {
    /// Scalar amplitude `α̃_u·aᵀ(θ_u)w_tx` applied to the delayed waveform.
    pub fn amplitude(&self) -> Complex<f64> {
        self.attenuation.complex_gain * self.tx_gain
    }

    /// `|α̃_u·aᵀ(θ_u)w_tx|²`.
    pub fn gain2(&self) -> f64 {
        self.amplitude().norm_sqr()
    }
}

pub fn target_echoes(scenario: &Scenario) -> Result<Vec<TargetEcho>> {
    let g = &scenario.geometry;
    let beam = scenario
        .targets
        .first()
        .ok_or_else(|| Error::InvalidParameter("scenario has no targets".into()))?
        .angle;
    let w_tx = ls_beamformer::<f64>(beam, g, Side::Transmit);
    scenario
        .targets
        .iter()
        .enumerate()
        .map(|(index, t)| {
            Ok(TargetEcho {
                index,
                angle: t.angle,
                offsets: sample_offsets(t.tau(), &scenario.numerology)?,
                doppler: t.doppler(scenario.numerology.fc),
                attenuation: attenuation_of(t, scenario),
                tx_gain: dot(&tx_steering::<f64>(t.angle, g).elements, &w_tx),
            })
        })
        .collect()
}

const PHASOR_BLOCK: usize = 1024;

/// `amp·tx[i − Ns]·e^{j2πf_d·i·Ts}`, zero before the echo arrives, truncated
/// to the transmit length.
pub fn echo_stream<T: Real>(tx: &[Complex<T>], echo: &TargetEcho, num: &OfdmNumerology) -> Result<Vec<Complex<T>>> {
    let ns = echo.offsets.ns;
    if ns >= tx.len() {
        return Err(Error::OutOfBounds(format!(
            "delay of {ns} samples exceeds the {}-sample frame",
            tx.len()
        )));
    }
    let amp = echo.amplitude();
    let step = echo.doppler * num.ts();
    let tau = 2.0 * std::f64::consts::PI;
    let inc = cis(step.fract() * tau);
    let mut out = vec![Complex::default(); tx.len()];
    let mut rot = Complex::default();
    for (j, (o, &s)) in out[ns..].iter_mut().zip(&tx[..tx.len() - ns]).enumerate() {
        let i = j + ns;
        // Exact phase every block, recursive rotation in between.
        if j % PHASOR_BLOCK == 0 {
            rot = amp * cis((step * i as f64).fract() * tau);
        } else {
            rot *= inc;
        }
        *o = s * Complex::new(T::lit(rot.re), T::lit(rot.im));
    }
    Ok(out)
}

/// Draws one CN(0, 1) sample.
pub fn cscg<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(T::lit(re * s), T::lit(im * s))
}

pub fn add_noise<T: Real, R: Rng + ?Sized>(buf: &mut [Complex<T>], sigma2: f64, rng: &mut R) {
    let s = T::lit(sigma2.sqrt());
    for z in buf {
        *z += cscg::<T, R>(rng).scale(s);
    }
}

/// Channel-major multi-channel baseband signal: antennas for a raw receive
/// matrix, output streams after a linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAntennaSignal<T> {
    channels: usize,
    len: usize,
    data: Vec<Complex<T>>,
    pub sample_rate: f64,
}

impl<T: Real> MultiAntennaSignal<T> {
    pub fn zeros(channels: usize, len: usize, sample_rate: f64) -> Self {
        Self {
            channels,
            len,
            data: vec![Complex::default(); channels * len],
            sample_rate,
        }
    }

    pub fn from_channels(rows: Vec<Vec<Complex<T>>>, sample_rate: f64) -> Result<Self> {
        let channels = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Dimension("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            len,
            data: rows.into_iter().flatten().collect(),
            sample_rate,
        })
    }

    pub fn nr(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.len..(r + 1) * self.len]
    }

    pub fn channel_mut(&mut self, r: usize) -> &mut [Complex<T>] {
        &mut self.data[r * self.len..(r + 1) * self.len]
    }

    /// The `Nr`-vector received at sample `i`.
    pub fn snapshot(&self, i: usize) -> Vec<Complex<T>> {
        (0..self.channels).map(|r| self.data[r * self.len + i]).collect()
    }

    /// Columns `start..start+n` as an `Nr × n` matrix.
    pub fn snapshots(&self, start: usize, n: usize) -> Result<CMatrix<T>> {
        if start + n > self.len {
            return Err(Error::OutOfBounds(format!(
                "snapshots [{start}, {}) beyond length {}",
                start + n,
                self.len
            )));
        }
        let mut y = CMatrix::zeros(self.channels, n);
        for r in 0..self.channels {
            for (j, &v) in self.channel(r)[start..start + n].iter().enumerate() {
                y[(r, j)] = v;
            }
        }
        Ok(y)
    }

    /// `W·rx` per sample; `W` has `nr()` columns.
    pub fn apply(&self, w: &CMatrix<T>) -> Result<Self> {
        if w.cols() != self.channels {
            return Err(Error::Dimension(format!(
                "{}-column weights on {} channels",
                w.cols(),
                self.channels
            )));
        }
        let mut out = Self::zeros(w.rows(), self.len, self.sample_rate);
        for o in 0..w.rows() {
            let dst = &mut out.data[o * self.len..(o + 1) * self.len];
            for r in 0..self.channels {
                let c = w[(o, r)];
                for (d, &s) in dst.iter_mut().zip(self.channel(r)) {
                    *d += c * s;
                }
            }
        }
        Ok(out)
    }
}

/// `y(t) = w_rxᵀ·rx(t)`.
pub fn beamform_combine<T: Real>(rx: &MultiAntennaSignal<T>, w_rx: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let w = CMatrix::from_row_major(1, w_rx.len(), w_rx.to_vec())?;
    Ok(rx.apply(&w)?.data)
}

/// Full `Nr`-antenna receive frame for a transmit frame and scenario.
/// Passing `rng = None` disables noise.
pub fn synthesize_rx<T: Real, R: Rng + ?Sized>(
    tx: &TimeSignal<T>,
    scenario: &Scenario,
    rng: Option<&mut R>,
) -> Result<MultiAntennaSignal<T>> {
    let field = EchoField::new(tx, scenario)?;
    let mut rx = field.materialize();
    if let Some(rng) = rng {
        let sigma2 = scenario.sigma2();
        for r in 0..rx.nr() {
            add_noise(rx.channel_mut(r), sigma2, rng);
        }
    }
    Ok(rx)
}

/// Per-target scalar echo streams plus their receive steering vectors, from
/// which any linear view of the receive matrix can be formed.
#[derive(Debug, Clone)]
pub struct EchoField<T> {
    pub echoes: Vec<TargetEcho>,
    streams: Vec<Vec<Complex<T>>>,
    steering: Vec<Vec<Complex<T>>>,
    nr: usize,
    len: usize,
    sigma2: f64,
    sample_rate: f64,
    /// Antenna noise already drawn for a snapshot window, reused by
    /// [`EchoField::project`] so both views see the same noise there.
    snapshot_noise: Option<(usize, CMatrix<T>)>,
}

impl<T: Real> EchoField<T> {
    pub fn new(tx: &TimeSignal<T>, scenario: &Scenario) -> Result<Self> {
        let echoes = target_echoes(scenario)?;
        let streams = echoes
            .iter()
            .map(|e| echo_stream(&tx.samples, e, &scenario.numerology))
            .collect::<Result<Vec<_>>>()?;
        let steering = echoes
            .iter()
            .map(|e| rx_steering::<T>(e.angle, &scenario.geometry).elements)
            .collect();
        Ok(Self {
            echoes,
            streams,
            steering,
            nr: scenario.geometry.nr,
            len: tx.len(),
            sigma2: scenario.sigma2(),
            sample_rate: tx.sample_rate,
            snapshot_noise: None,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn stream(&self, u: usize) -> &[Complex<T>] {
        &self.streams[u]
    }

    /// Noiseless `Σ_u b(θ_u)·x_u(t)`.
    pub fn materialize(&self) -> MultiAntennaSignal<T> {
        let mut rx = MultiAntennaSignal::zeros(self.nr, self.len, self.sample_rate);
        for (x, b) in self.streams.iter().zip(&self.steering) {
            for (r, &br) in b.iter().enumerate() {
                for (d, &s) in rx.channel_mut(r).iter_mut().zip(x) {
                    *d += br * s;
                }
            }
        }
        rx
    }

    /// Noisy `Nr × n` snapshot matrix starting at sample `start`. The noise
    /// drawn here is remembered and reused by later projections.
    pub fn snapshots<R: Rng + ?Sized>(&mut self, start: usize, n: usize, rng: &mut R) -> Result<CMatrix<T>> {
        if start + n > self.len {
            return Err(Error::OutOfBounds(format!(
                "snapshots [{start}, {}) beyond length {}",
                start + n,
                self.len
            )));
        }
        let s = T::lit(self.sigma2.sqrt());
        let mut noise = CMatrix::zeros(self.nr, n);
        for r in 0..self.nr {
            for j in 0..n {
                noise[(r, j)] = cscg::<T, R>(rng).scale(s);
            }
        }
        let mut y = noise.clone();
        for (x, b) in self.streams.iter().zip(&self.steering) {
            for (r, &br) in b.iter().enumerate() {
                for j in 0..n {
                    y[(r, j)] += br * x[start + j];
                }
            }
        }
        self.snapshot_noise = Some((start, noise));
        Ok(y)
    }

    /// Distributionally identical to `W·(rx + noise)` without forming the
    /// `Nr`-antenna matrix. `rng = None` gives the noiseless projection.
    pub fn project<R: Rng + ?Sized>(&self, w: &CMatrix<T>, rng: Option<&mut R>) -> Result<MultiAntennaSignal<T>> {
        if w.cols() != self.nr {
            return Err(Error::Dimension(format!(
                "{}-column weights on {} antennas",
                w.cols(),
                self.nr
            )));
        }
        let outs = w.rows();
        let mut out = MultiAntennaSignal::zeros(outs, self.len, self.sample_rate);
        for (x, b) in self.streams.iter().zip(&self.steering) {
            let coeff = w.matvec(b)?;
            for (o, &c) in coeff.iter().enumerate() {
                for (d, &s) in out.channel_mut(o).iter_mut().zip(x) {
                    *d += c * s;
                }
            }
        }
        let Some(rng) = rng else {
            return Ok(out);
        };
        let cov = (w * &w.adjoint()).scale(T::lit(self.sigma2));
        let l = psd_sqrt(&cov)?;
        let reserved = self.snapshot_noise.as_ref().map(|(s, n)| (*s, *s + n.cols()));
        let mut z = vec![Complex::default(); outs];
        for i in 0..self.len {
            if let Some((s, e)) = reserved {
                if (s..e).contains(&i) {
                    continue;
                }
            }
            for zi in z.iter_mut() {
                *zi = cscg::<T, R>(rng);
            }
            for o in 0..outs {
                let v: Complex<T> = l.row(o).iter().zip(&z).map(|(a, b)| a * b).sum();
                out.data[o * self.len + i] += v;
            }
        }
        if let Some((start, noise)) = &self.snapshot_noise {
            for j in 0..noise.cols() {
                let col = noise.column(j);
                let wn = w.matvec(&col)?;
                for (o, v) in wn.into_iter().enumerate() {
                    out.data[o * self.len + start + j] += v;
                }
            }
        }
        Ok(out)
    }
}

const RAW_MAGIC: &[u8; 4] = b"CSRX";
const RAW_VERSION: u32 = 1;

/// Raw dump layout: magic `CSRX`, u32 version, u32 channel count, u64 sample
/// count, f64 sample rate, then per channel `len` interleaved (re, im) f32
/// pairs. Everything little-endian.
pub fn write_raw<T: Real, W: Write>(sig: &MultiAntennaSignal<T>, mut out: W) -> Result<()> {
    out.write_all(RAW_MAGIC)?;
    out.write_all(&RAW_VERSION.to_le_bytes())?;
    out.write_all(&(sig.nr() as u32).to_le_bytes())?;
    out.write_all(&(sig.len() as u64).to_le_bytes())?;
    out.write_all(&sig.sample_rate.to_le_bytes())?;
    let mut buf = Vec::with_capacity(sig.len() * 8);
    for r in 0..sig.nr() {
        buf.clear();
        for z in sig.channel(r) {
            buf.extend_from_slice(&(z.re.to_f64_lossy() as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im.to_f64_lossy() as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_raw<R: Read>(mut inp: R) -> Result<MultiAntennaSignal<f32>> {
    let mut head = [0u8; 28];
    inp.read_exact(&mut head)?;
    if &head[..4] != RAW_MAGIC {
        return Err(Error::Config("not a raw signal dump".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
    if version != RAW_VERSION {
        return Err(Error::Config(format!("unsupported dump version {version}")));
    }
    let nr = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let len = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes")) as usize;
    let sample_rate = f64::from_le_bytes(head[20..28].try_into().expect("8 bytes"));
    let mut bytes = vec![0u8; nr * len * 8];
    inp.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex::new(
                f32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                f32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
            )
        })
        .collect();
    Ok(MultiAntennaSignal {
        channels: nr,
        len,
        data,
        sample_rate,
    })
}

pub fn write_raw_file<T: Real>(sig: &MultiAntennaSignal<T>, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_raw(sig, f)
}
