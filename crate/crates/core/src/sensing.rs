//! Receive chain: LS separation, coherent compensation, symbol recovery,
//! point-division range-Doppler maps, CA-CFAR and known-peak SINR.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::array::SeparationOperator;
use crate::channel::MultiAntennaSignal;
use crate::error::{Error, Result};
use crate::numerology::{OfdmNumerology, C0};
use crate::scalar::Real;
use crate::waveform::{Ofdm, SymbolGrid};

#[derive(Debug, Clone)]
pub struct SeparatedStream<T> {
    pub samples: Vec<Complex<T>>,
    pub target_index: usize,
    /// Noise amplification of this stream, `λ_u`.
    pub lambda_u: T,
}

/// Row `u` of `B†·rx` for every sample.
pub fn ls_separate<T: Real>(rx: &MultiAntennaSignal<T>, sep: &SeparationOperator<T>) -> Result<Vec<SeparatedStream<T>>> {
    let out = rx.apply(&sep.pinv)?;
    Ok((0..out.nr())
        .map(|u| SeparatedStream {
            samples: out.channel(u).to_vec(),
            target_index: u,
            lambda_u: sep.lambda[u],
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Compensated<T> {
    pub samples: Vec<Complex<T>>,
    /// Tail samples actually added; below the request when the frame ends.
    pub applied_na: usize,
    pub clipped: bool,
}

/// The CP-stripped window of symbol `n` with the `na` samples that follow it
/// added onto its first `na` entries.
pub fn coherent_compensate<T: Real>(
    stream: &[Complex<T>],
    n: usize,
    na: usize,
    num: &OfdmNumerology,
) -> Result<Compensated<T>> {
    let nc = num.nc;
    if na > nc {
        return Err(Error::InvalidParameter(format!("compensation length {na} exceeds Nc={nc}")));
    }
    let start = n * num.block_len() + num.cp_samples();
    let end = start + nc;
    if end > stream.len() {
        return Err(Error::OutOfBounds(format!(
            "symbol {n} window [{start}, {end}) exceeds stream length {}",
            stream.len()
        )));
    }
    let mut samples = stream[start..end].to_vec();
    let applied_na = na.min(stream.len() - end);
    for (d, &s) in samples.iter_mut().zip(&stream[end..end + applied_na]) {
        *d += s;
    }
    Ok(Compensated {
        samples,
        applied_na,
        clipped: applied_na < na,
    })
}

#[derive(Debug, Clone)]
pub struct DemodResult<T> {
    pub grid: SymbolGrid<T>,
    /// Symbols whose compensation tail ran past the end of the stream.
    pub clipped_symbols: usize,
}

impl<T> DemodResult<T> {
    pub fn partially_compensated(&self) -> bool {
        self.clipped_symbols > 0
    }
}

/// Compensates and demodulates every symbol of a frame.
pub fn demod_grid<T: Real>(ofdm: &Ofdm<T>, stream: &[Complex<T>], na: usize) -> Result<DemodResult<T>> {
    let num = *ofdm.numerology();
    let mut grid = SymbolGrid::zeros(num.nc, num.m);
    let mut clipped_symbols = 0;
    for n in 0..num.m {
        let mut c = coherent_compensate(stream, n, na, &num)?;
        clipped_symbols += c.clipped as usize;
        ofdm.dft(&mut c.samples);
        grid.symbol_mut(n).copy_from_slice(&c.samples);
    }
    Ok(DemodResult { grid, clipped_symbols })
}

/// Range-Doppler map stored range-major: bin `(k, l)` lives at
/// `bins[k * m + l]`.
#[derive(Debug, Clone)]
pub struct RangeDopplerMap<T> {
    nc: usize,
    m: usize,
    bins: Vec<Complex<T>>,
    /// Metres per range bin.
    pub range_step: f64,
    /// Hz per Doppler bin.
    pub doppler_step: f64,
    /// Carrier, for velocity conversion.
    pub fc: f64,
}

impl<T: Real> RangeDopplerMap<T> {
    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bin(&self, k: usize, l: usize) -> Complex<T> {
        self.bins[k * self.m + l]
    }

    pub fn power(&self, k: usize, l: usize) -> f64 {
        self.bin(k, l).norm_sqr().to_f64_lossy()
    }

    pub fn bins(&self) -> &[Complex<T>] {
        &self.bins
    }

    /// `|bin|²` for the whole map, range-major.
    pub fn power_map(&self) -> Vec<f64> {
        self.bins.iter().map(|z| z.norm_sqr().to_f64_lossy()).collect()
    }

    pub fn range_of(&self, k: usize) -> f64 {
        k as f64 * self.range_step
    }

    /// Doppler bins at or above `M/2` are negative velocities.
    pub fn velocity_of(&self, l: usize) -> f64 {
        let signed = if l >= self.m.div_ceil(2) {
            l as f64 - self.m as f64
        } else {
            l as f64
        };
        signed * self.doppler_step * C0 / (2.0 * self.fc)
    }

    /// Bin with the largest power.
    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self
            .bins
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, z)| {
                let p = z.norm_sqr();
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            });
        (i / self.m, i % self.m)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,l,range_m,velocity_mps,power_db")?;
        for k in 0..self.nc {
            for l in 0..self.m {
                let p = self.power(k, l).max(f64::MIN_POSITIVE);
                writeln!(
                    out,
                    "{k},{l},{:.3},{:.3},{:.3}",
                    self.range_of(k),
                    self.velocity_of(l),
                    10.0 * p.log10()
                )?;
            }
        }
        Ok(())
    }

    /// Binary dump: magic `CSRD`, u32 version 1, u32 Nc, u32 M, f64 range
    /// step, f64 Doppler step, then range-major (re, im) f32 pairs, all
    /// little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"CSRD")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.nc as u32).to_le_bytes())?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&self.range_step.to_le_bytes())?;
        out.write_all(&self.doppler_step.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.bins.len() * 8);
        for z in &self.bins {
            buf.extend_from_slice(&(z.re.to_f64_lossy() as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im.to_f64_lossy() as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }
}

/// Reusable FFT plans for map formation.
#[derive(Clone)]
pub struct RdmEngine<T: Real> {
    num: OfdmNumerology,
    range_ifft: Arc<dyn Fft<T>>,
    doppler_fft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for RdmEngine<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdmEngine").field("num", &self.num).finish_non_exhaustive()
    }
}

impl<T: Real> RdmEngine<T> {
    pub fn new(num: &OfdmNumerology) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            num: *num,
            range_ifft: planner.plan_fft_inverse(num.nc),
            doppler_fft: planner.plan_fft_forward(num.m),
        }
    }

    /// `RDM(k,l) = (1/MNc)·Σ_n Σ_p (Y_n(p)/S_n(p))·e^{j2πpk/Nc}·e^{−j2πnl/M}`.
    pub fn build(&self, rx_grid: &SymbolGrid<T>, tx_grid: &SymbolGrid<T>) -> Result<RangeDopplerMap<T>> {
        let (nc, m) = (self.num.nc, self.num.m);
        for (name, g) in [("rx", rx_grid), ("tx", tx_grid)] {
            if g.nc() != nc || g.m() != m {
                return Err(Error::Dimension(format!(
                    "{name} grid is {}x{}, expected {nc}x{m}",
                    g.nc(),
                    g.m()
                )));
            }
        }
        let mut work = Vec::with_capacity(nc * m);
        for n in 0..m {
            let row_start = work.len();
            for (p, (y, s)) in rx_grid.symbol(n).iter().zip(tx_grid.symbol(n)).enumerate() {
                if s.norm_sqr() == T::zero() {
                    return Err(Error::ZeroSymbol { symbol: n, subcarrier: p });
                }
                work.push(y / s);
            }
            self.range_ifft.process(&mut work[row_start..]);
        }
        let scale = T::one() / T::from_count(nc * m);
        let mut bins = vec![Complex::default(); nc * m];
        for k in 0..nc {
            let col = &mut bins[k * m..(k + 1) * m];
            for (n, c) in col.iter_mut().enumerate() {
                *c = work[n * nc + k];
            }
            self.doppler_fft.process(col);
            col.iter_mut().for_each(|z| *z = z.scale(scale));
        }
        Ok(RangeDopplerMap {
            nc,
            m,
            bins,
            range_step: self.num.range_resolution(),
            doppler_step: self.num.doppler_resolution(),
            fc: self.num.fc,
        })
    }
}

pub fn build_rdm<T: Real>(
    rx_grid: &SymbolGrid<T>,
    tx_grid: &SymbolGrid<T>,
    num: &OfdmNumerology,
) -> Result<RangeDopplerMap<T>> {
    RdmEngine::new(num).build(rx_grid, tx_grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarConfig {
    pub pfa: f64,
    /// Training cells on each side of the guard region, per dimension.
    pub train: usize,
    /// Guard cells on each side of the cell under test, per dimension.
    pub guard: usize,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            pfa: 1e-11,
            train: 16,
            guard: 4,
        }
    }
}

impl CfarConfig {
    pub fn training_cells(&self) -> usize {
        let outer = 2 * (self.train + self.guard) + 1;
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }

    /// `N·(pfa^{−1/N} − 1)`.
    pub fn alpha(&self) -> f64 {
        let n = self.training_cells() as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }

    fn validate(&self, nc: usize, m: usize) -> Result<()> {
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidParameter(format!("pfa {} outside (0, 1)", self.pfa)));
        }
        let span = 2 * (self.train + self.guard) + 1;
        if self.train == 0 || span > nc || span > m {
            return Err(Error::InvalidParameter(format!(
                "CFAR window of {span} cells does not fit a {nc}x{m} map"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub k: usize,
    pub l: usize,
    pub power: f64,
    pub threshold: f64,
}

/// Summed-area table over a toroidally padded power map, so any window sum
/// costs four lookups.
struct WrappedIntegral {
    pad: usize,
    width: usize,
    table: Vec<f64>,
}

impl WrappedIntegral {
    fn new(power: &[f64], nc: usize, m: usize, pad: usize) -> Self {
        let (h, w) = (nc + 2 * pad, m + 2 * pad);
        let width = w + 1;
        let mut table = vec![0.0; (h + 1) * width];
        for i in 0..h {
            let k = (i + nc - pad % nc) % nc;
            let mut row = 0.0;
            for j in 0..w {
                let l = (j + m - pad % m) % m;
                row += power[k * m + l];
                table[(i + 1) * width + j + 1] = table[i * width + j + 1] + row;
            }
        }
        Self { pad, width, table }
    }

    /// Sum over the square of half-size `r` centred on `(k, l)`.
    fn square(&self, k: usize, l: usize, r: usize) -> f64 {
        let (i0, j0) = (k + self.pad - r, l + self.pad - r);
        let (i1, j1) = (k + self.pad + r + 1, l + self.pad + r + 1);
        let t = &self.table;
        let w = self.width;
        t[i1 * w + j1] - t[i0 * w + j1] - t[i1 * w + j0] + t[i0 * w + j0]
    }
}

/// Sum of `power` over the `(2r+1)²` square around `(k, l)` with wrap.
fn wrapped_square(power: &[f64], nc: usize, m: usize, k: usize, l: usize, r: usize) -> f64 {
    let mut s = 0.0;
    for dk in 0..=2 * r {
        let kk = (k + nc + dk - r) % nc;
        for dl in 0..=2 * r {
            let ll = (l + m + dl - r) % m;
            s += power[kk * m + ll];
        }
    }
    s
}

/// 2D cell-averaging CFAR over every cell, wrapping at the map edges.
pub fn cfar_detect<T: Real>(map: &RangeDopplerMap<T>, cfg: &CfarConfig) -> Result<Vec<Detection>> {
    let (nc, m) = (map.nc(), map.m());
    cfg.validate(nc, m)?;
    let power = map.power_map();
    let outer = cfg.train + cfg.guard;
    let integral = WrappedIntegral::new(&power, nc, m, outer);
    let scale = cfg.alpha() / cfg.training_cells() as f64;
    let mut out = Vec::new();
    for k in 0..nc {
        for l in 0..m {
            let p = power[k * m + l];
            let train = integral.square(k, l, outer) - integral.square(k, l, cfg.guard);
            let threshold = scale * train;
            if p > threshold {
                out.push(Detection { k, l, power: p, threshold });
            }
        }
    }
    Ok(out)
}

/// CFAR decisions for selected cells only; `None` where the cell is below
/// threshold.
pub fn cfar_test_cells<T: Real>(
    map: &RangeDopplerMap<T>,
    cfg: &CfarConfig,
    cells: &[(usize, usize)],
) -> Result<Vec<Option<Detection>>> {
    let (nc, m) = (map.nc(), map.m());
    cfg.validate(nc, m)?;
    let power = map.power_map();
    let scale = cfg.alpha() / cfg.training_cells() as f64;
    let outer = cfg.train + cfg.guard;
    Ok(cells
        .iter()
        .map(|&(k, l)| {
            let (k, l) = (k % nc, l % m);
            let p = power[k * m + l];
            let train = wrapped_square(&power, nc, m, k, l, outer) - wrapped_square(&power, nc, m, k, l, cfg.guard);
            let threshold = scale * train;
            (p > threshold).then_some(Detection { k, l, power: p, threshold })
        })
        .collect())
}

/// Whether any cell within `±radius` bins of `(k, l)` passes CFAR.
pub fn detected_near<T: Real>(
    map: &RangeDopplerMap<T>,
    cfg: &CfarConfig,
    k: usize,
    l: usize,
    radius: usize,
) -> Result<bool> {
    let (nc, m) = (map.nc(), map.m());
    let mut cells = Vec::new();
    for dk in 0..=2 * radius {
        for dl in 0..=2 * radius {
            cells.push(((k + nc + dk - radius) % nc, (l + m + dl - radius) % m));
        }
    }
    Ok(cfar_test_cells(map, cfg, &cells)?.iter().any(Option::is_some))
}

/// Groups detections that touch (8-neighbourhood, toroidal) and keeps the
/// strongest cell of each group.
pub fn cluster_detections(dets: &[Detection], nc: usize, m: usize) -> Vec<Detection> {
    let mut seen = vec![false; dets.len()];
    let index: std::collections::HashMap<(usize, usize), usize> =
        dets.iter().enumerate().map(|(i, d)| ((d.k, d.l), i)).collect();
    let mut out = Vec::new();
    for start in 0..dets.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut best = dets[start];
        while let Some(i) = stack.pop() {
            let d = dets[i];
            if d.power > best.power {
                best = d;
            }
            for dk in [nc - 1, 0, 1] {
                for dl in [m - 1, 0, 1] {
                    let key = ((d.k + dk) % nc, (d.l + dl) % m);
                    if let Some(&j) = index.get(&key) {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        out.push(best);
    }
    out
}

pub fn write_detections_csv<W: Write, T: Real>(dets: &[Detection], map: &RangeDopplerMap<T>, mut out: W) -> Result<()> {
    writeln!(out, "k,l,range_m,velocity_mps,power_db,threshold_db")?;
    for d in dets {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3}",
            d.k,
            d.l,
            map.range_of(d.k),
            map.velocity_of(d.l),
            10.0 * d.power.max(f64::MIN_POSITIVE).log10(),
            10.0 * d.threshold.max(f64::MIN_POSITIVE).log10()
        )?;
    }
    Ok(())
}

/// Half-extent of the region excluded around each known peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardBox {
    pub range: usize,
    pub doppler: usize,
}

impl Default for GuardBox {
    fn default() -> Self {
        Self { range: 8, doppler: 4 }
    }
}

/// `|bin(peak)|²` over the mean power of all bins outside the guard boxes
/// around `all_peaks`, in dB.
pub fn measure_rdm_sinr<T: Real>(
    map: &RangeDopplerMap<T>,
    peak: (usize, usize),
    all_peaks: &[(usize, usize)],
    guard: GuardBox,
) -> Result<f64> {
    let (nc, m) = (map.nc(), map.m());
    if peak.0 >= nc || peak.1 >= m {
        return Err(Error::OutOfBounds(format!("peak {peak:?} outside {nc}x{m} map")));
    }
    let mut excluded = vec![false; nc * m];
    let rk = guard.range.min(nc / 2);
    let rl = guard.doppler.min(m / 2);
    for &(k, l) in all_peaks.iter().chain(std::iter::once(&peak)) {
        for dk in 0..=2 * rk {
            let kk = (k + nc + dk - rk) % nc;
            for dl in 0..=2 * rl {
                excluded[kk * m + (l + m + dl - rl) % m] = true;
            }
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (z, &ex) in map.bins.iter().zip(&excluded) {
        if !ex {
            sum += z.norm_sqr().to_f64_lossy();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter("guard boxes cover the whole map".into()));
    }
    let floor = (sum / count as f64).max(f64::MIN_POSITIVE);
    Ok(10.0 * (map.power(peak.0, peak.1) / floor).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> OfdmNumerology {
        OfdmNumerology::new(28e9, 120e3, 64, 32, 8.0 / (64.0 * 120e3)).unwrap()
    }

    #[test]
    fn ideal_channel_peaks_at_origin() {
        let num = small();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tx = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut rng);
        let map = build_rdm(&tx, &tx, &num).unwrap();
        assert!((map.bin(0, 0) - Complex::new(1.0, 0.0)).norm() < 1e-12);
        let rest: f64 = map.power_map().iter().skip(1).sum();
        assert!(rest < 1e-20);
    }

    #[test]
    fn zero_symbol_rejected() {
        let num = small();
        let tx = SymbolGrid::<f64>::zeros(num.nc, num.m);
        assert!(matches!(build_rdm(&tx, &tx, &num), Err(Error::ZeroSymbol { .. })));
    }

    #[test]
    fn compensation_adds_tail() {
        let num = small();
        let s: Vec<Complex<f64>> = (0..num.frame_len()).map(|i| Complex::new(i as f64, 0.0)).collect();
        let plain = coherent_compensate(&s, 1, 0, &num).unwrap();
        let start = num.block_len() + num.cp_samples();
        assert_eq!(plain.samples[0].re, start as f64);
        let comp = coherent_compensate(&s, 1, 3, &num).unwrap();
        assert_eq!(comp.samples[2].re, (start + 2 + start + num.nc + 2) as f64);
        assert_eq!(comp.samples[3].re, (start + 3) as f64);
        let last = coherent_compensate(&s, num.m - 1, 3, &num).unwrap();
        assert!(last.clipped);
        assert_eq!(last.applied_na, 0);
        assert!(coherent_compensate(&s, 0, num.nc + 1, &num).is_err());
    }

    #[test]
    fn cfar_alpha() {
        let cfg = CfarConfig::default();
        assert_eq!(cfg.training_cells(), 1600);
        assert!((cfg.alpha() - 25.53).abs() < 0.01, "{}", cfg.alpha());
    }

    #[test]
    fn integral_matches_direct_sums() {
        let (nc, m) = (13, 11);
        let power: Vec<f64> = (0..nc * m).map(|i| ((i * 7919) % 101) as f64).collect();
        let integral = WrappedIntegral::new(&power, nc, m, 5);
        for (k, l) in [(0, 0), (12, 10), (6, 3), (1, 9)] {
            for r in [0, 2, 5] {
                let a = integral.square(k, l, r);
                let b = wrapped_square(&power, nc, m, k, l, r);
                assert!((a - b).abs() < 1e-9, "{k} {l} {r}");
            }
        }
    }

    #[test]
    fn velocity_axis_signs() {
        let num = small();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tx = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut rng);
        let map = build_rdm(&tx, &tx, &num).unwrap();
        assert!(map.velocity_of(1) > 0.0);
        assert!(map.velocity_of(num.m - 1) < 0.0);
        assert!((map.velocity_of(1) + map.velocity_of(num.m - 1)).abs() < 1e-9);
        assert!((map.range_of(10) - 10.0 * 3e8 / (2.0 * num.bandwidth())).abs() < 1e-9);
    }

    #[test]
    fn guard_covering_map_is_an_error() {
        let num = OfdmNumerology::new(28e9, 120e3, 8, 4, 2.0 / (8.0 * 120e3)).unwrap();
        let tx = SymbolGrid::<f64>::from_vec(8, 4, vec![Complex::new(1.0, 0.0); 32]).unwrap();
        let map = build_rdm(&tx, &tx, &num).unwrap();
        assert!(measure_rdm_sinr(&map, (0, 0), &[], GuardBox::default()).is_err());
    }

    #[test]
    fn clustering_merges_neighbours_across_wrap() {
        let d = |k, l, power| Detection { k, l, power, threshold: 1.0 };
        let dets = [d(0, 0, 5.0), d(9, 0, 7.0), d(4, 4, 2.0)];
        let c = cluster_detections(&dets, 10, 10);
        assert_eq!(c.len(), 2);
        assert!(c.iter().any(|x| x.k == 9 && x.power == 7.0));
    }
}
