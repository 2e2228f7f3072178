//! OFDM timing, array geometry, target kinematics and the scenario that ties
//! them together. Everything here is plain `f64` physical bookkeeping; the
//! generic signal-processing modules consume the derived sample counts.

use std::path::Path;

use serde::Deserialize;

use crate::channel::NoiseSpec;
use crate::error::{Error, Result};
use crate::scalar::round_even;

/// Speed of light, m/s.
pub const C0: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmNumerology {
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Subcarriers per symbol.
    pub nc: usize,
    /// Symbols per frame.
    pub m: usize,
    /// Cyclic-prefix duration, s.
    pub tcp: f64,
}

impl OfdmNumerology {
    pub fn new(fc: f64, delta_f: f64, nc: usize, m: usize, tcp: f64) -> Result<Self> {
        let num = Self { fc, delta_f, nc, m, tcp };
        num.validate()?;
        Ok(num)
    }

    /// 28 GHz carrier, 120 kHz spacing, 4096 subcarriers, 256 symbols,
    /// 0.59 µs cyclic prefix.
    pub fn table_one() -> Self {
        Self {
            fc: 28e9,
            delta_f: 120e3,
            nc: 4096,
            m: 256,
            tcp: 0.59e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("fc", self.fc), ("delta_f", self.delta_f), ("tcp", self.tcp)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.nc < 2 || self.m < 1 {
            return Err(Error::InvalidParameter(format!(
                "need nc >= 2 and m >= 1, got nc={} m={}",
                self.nc, self.m
            )));
        }
        let cp = self.cp_samples();
        if cp < 1 || cp >= self.nc {
            return Err(Error::InvalidParameter(format!(
                "cyclic prefix of {cp} samples must lie in [1, {})",
                self.nc
            )));
        }
        Ok(())
    }

    /// Useful symbol duration `1/Δf`.
    pub fn td(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Total symbol duration `Tcp + Td`.
    pub fn t(&self) -> f64 {
        self.tcp + self.td()
    }

    /// Sampling interval `Td/Nc`.
    pub fn ts(&self) -> f64 {
        self.td() / self.nc as f64
    }

    pub fn bandwidth(&self) -> f64 {
        self.nc as f64 * self.delta_f
    }

    pub fn sample_rate(&self) -> f64 {
        self.bandwidth()
    }

    pub fn wavelength(&self) -> f64 {
        C0 / self.fc
    }

    pub fn cp_samples(&self) -> usize {
        round_even(self.tcp / self.ts()).max(0.0) as usize
    }

    /// Samples per CP + symbol block.
    pub fn block_len(&self) -> usize {
        self.nc + self.cp_samples()
    }

    pub fn frame_len(&self) -> usize {
        self.m * self.block_len()
    }

    /// Range spacing of one RDM range bin, `c0/(2·Nc·Δf)`.
    pub fn range_resolution(&self) -> f64 {
        C0 / (2.0 * self.bandwidth())
    }

    /// Doppler spacing of one RDM Doppler bin, `1/(M·T)`.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.t())
    }
}

/// Uniform linear transmit and receive arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub nt: usize,
    pub nr: usize,
    /// Transmit element spacing, m.
    pub dt: f64,
    /// Receive element spacing, m.
    pub dr: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(nt: usize, nr: usize, dt: f64, dr: f64, wavelength: f64) -> Result<Self> {
        let g = Self { nt, nr, dt, dr, wavelength };
        g.validate()?;
        Ok(g)
    }

    pub fn half_wavelength(nt: usize, nr: usize, wavelength: f64) -> Self {
        Self {
            nt,
            nr,
            dt: wavelength / 2.0,
            dr: wavelength / 2.0,
            wavelength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt < 1 || self.nr < 1 {
            return Err(Error::InvalidParameter("arrays need at least one element".into()));
        }
        for (name, v) in [("dt", self.dt), ("dr", self.dr), ("wavelength", self.wavelength)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A point target. Positive velocity produces a positive Doppler shift.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    /// Range, m.
    pub range: f64,
    /// Radial velocity, m/s.
    pub velocity: f64,
    /// Elevation angle, degrees.
    pub angle: f64,
    /// Radar cross section, m².
    pub rcs: f64,
}

impl Target {
    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::InvalidParameter(format!("target range {} must be positive", self.range)));
        }
        if !(self.rcs.is_finite() && self.rcs > 0.0) {
            return Err(Error::InvalidParameter(format!("target rcs {} must be positive", self.rcs)));
        }
        if self.angle.is_nan() || self.angle.abs() >= 90.0 {
            return Err(Error::InvalidParameter(format!(
                "target angle {}° outside (-90°, 90°)",
                self.angle
            )));
        }
        if !self.velocity.is_finite() {
            return Err(Error::InvalidParameter("target velocity must be finite".into()));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        2.0 * self.range / C0
    }

    pub fn doppler(&self, fc: f64) -> f64 {
        doppler_shift(self.velocity, fc, C0)
    }
}

/// Elevation (degrees) of a ground point at slant range `range` seen from a
/// mast of height `height`.
pub fn elevation_from_height(height: f64, range: f64) -> f64 {
    (height / range).clamp(-1.0, 1.0).asin().to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub numerology: OfdmNumerology,
    pub geometry: ArrayGeometry,
    /// Index 0 is the target the transmit beam is steered at.
    pub targets: Vec<Target>,
    pub pt_dbm: f64,
    pub gt_db: f64,
    pub gr_db: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub music_snapshots: usize,
}

/// Base-station mast height used to place the default targets, m.
pub const BS_HEIGHT: f64 = 30.0;

impl Default for Scenario {
    /// The long-range scene: the beam-steered UE at 500 m and a strong
    /// close-range target at 260 m inside the same beam, both placed at the
    /// elevation a 30 m mast sees them.
    fn default() -> Self {
        let numerology = OfdmNumerology::table_one();
        let geometry = ArrayGeometry::half_wavelength(16, 16, numerology.wavelength());
        let target = |range: f64, velocity: f64| Target {
            range,
            velocity,
            angle: elevation_from_height(BS_HEIGHT, range),
            rcs: 10.0,
        };
        Self {
            numerology,
            geometry,
            targets: vec![target(500.0, 40.0), target(260.0, 60.0)],
            pt_dbm: 46.0,
            gt_db: 32.0,
            gr_db: 32.0,
            noise: NoiseSpec::default(),
            seed: 1,
            music_snapshots: 256,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        self.geometry.validate()?;
        let u = self.targets.len();
        if u < 1 || u > self.geometry.nr {
            return Err(Error::InvalidParameter(format!(
                "target count {u} must lie in [1, Nr={}]",
                self.geometry.nr
            )));
        }
        for (i, t) in self.targets.iter().enumerate() {
            t.validate()?;
            sample_offsets(t.tau(), &self.numerology)
                .map_err(|e| Error::InvalidParameter(format!("target {i}: {e}")))?;
            for other in &self.targets[i + 1..] {
                if (other.angle - t.angle).abs() < 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "targets share the angle {}°",
                        t.angle
                    )));
                }
            }
        }
        if self.music_snapshots < 1 {
            return Err(Error::InvalidParameter("music_snapshots must be >= 1".into()));
        }
        if !self.pt_dbm.is_finite() {
            return Err(Error::InvalidParameter("pt_dbm must be finite".into()));
        }
        self.noise.validate()
    }

    pub fn pt_watts(&self) -> f64 {
        10f64.powf((self.pt_dbm - 30.0) / 10.0)
    }

    pub fn gt_linear(&self) -> f64 {
        10f64.powf(self.gt_db / 10.0)
    }

    pub fn gr_linear(&self) -> f64 {
        10f64.powf(self.gr_db / 10.0)
    }

    /// Resolved per-antenna noise power σ², W.
    pub fn sigma2(&self) -> f64 {
        self.noise.sigma2(self.numerology.bandwidth())
    }

    pub fn offsets(&self, target: usize) -> Result<SampleOffsets> {
        sample_offsets(self.targets[target].tau(), &self.numerology)
    }

    /// RDM bin index `(round(B·τ), round(M·f_d·T))` of a target, the Doppler
    /// index wrapped into `[0, M)`.
    pub fn peak_bin(&self, target: usize) -> (usize, usize) {
        let num = &self.numerology;
        let t = &self.targets[target];
        let k = round_even(num.bandwidth() * t.tau()) as i64;
        let l = round_even(num.m as f64 * t.doppler(num.fc) * num.t()) as i64;
        (
            k.rem_euclid(num.nc as i64) as usize,
            l.rem_euclid(num.m as i64) as usize,
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let sc = file.into_scenario()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// `τ = 2·range/c0`.
pub fn round_trip_delay(range: f64, c0: f64) -> Result<f64> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::InvalidParameter(format!("range {range} must be positive")));
    }
    Ok(2.0 * range / c0)
}

/// `f_d = 2·v·fc/c0`.
pub fn doppler_shift(velocity: f64, fc: f64, c0: f64) -> f64 {
    2.0 * velocity * fc / c0
}

/// Sample counts associated with a round-trip delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOffsets {
    /// Samples by which the echo overruns the cyclic prefix.
    pub ne: usize,
    /// Total delay in samples.
    pub ns: usize,
}

pub fn sample_offsets(tau: f64, num: &OfdmNumerology) -> Result<SampleOffsets> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("delay {tau} must be non-negative")));
    }
    if tau >= num.td() {
        return Err(Error::InvalidParameter(format!(
            "delay {tau:e} s reaches the useful symbol duration {:e} s",
            num.td()
        )));
    }
    let ts = num.ts();
    let ns = round_even(tau / ts) as usize;
    let ne = round_even((tau - num.tcp) / ts).max(0.0) as usize;
    Ok(SampleOffsets { ne, ns })
}

/// `c0/(2Δf)`.
pub fn max_unambiguous_range(num: &OfdmNumerology) -> f64 {
    C0 / (2.0 * num.delta_f)
}

/// `c0·Tcp/2`, the range beyond which echoes overrun the cyclic prefix.
pub fn max_cp_range(num: &OfdmNumerology) -> f64 {
    C0 * num.tcp / 2.0
}

// Config file schema. Every field is optional; missing ones fall back to the
// defaults above.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    pt_dbm: Option<f64>,
    gt_db: Option<f64>,
    gr_db: Option<f64>,
    seed: Option<u64>,
    music_snapshots: Option<usize>,
    numerology: Option<NumerologyFile>,
    array: Option<ArrayFile>,
    noise: Option<NoiseFile>,
    target: Option<Vec<TargetFile>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumerologyFile {
    fc: Option<f64>,
    delta_f: Option<f64>,
    nc: Option<usize>,
    m: Option<usize>,
    tcp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayFile {
    nt: Option<usize>,
    nr: Option<usize>,
    dt: Option<f64>,
    dr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    sigma2: Option<f64>,
    temperature_k: Option<f64>,
    noise_figure_db: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    range: f64,
    velocity: Option<f64>,
    /// Defaults to the elevation seen from a 30 m mast.
    angle: Option<f64>,
    rcs: Option<f64>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let mut sc = Scenario::default();
        if let Some(n) = self.numerology {
            let d = sc.numerology;
            sc.numerology = OfdmNumerology {
                fc: n.fc.unwrap_or(d.fc),
                delta_f: n.delta_f.unwrap_or(d.delta_f),
                nc: n.nc.unwrap_or(d.nc),
                m: n.m.unwrap_or(d.m),
                tcp: n.tcp.unwrap_or(d.tcp),
            };
        }
        let lambda = sc.numerology.wavelength();
        let a = self.array.unwrap_or_default();
        sc.geometry = ArrayGeometry {
            nt: a.nt.unwrap_or(16),
            nr: a.nr.unwrap_or(16),
            dt: a.dt.unwrap_or(lambda / 2.0),
            dr: a.dr.unwrap_or(lambda / 2.0),
            wavelength: lambda,
        };
        if let Some(n) = self.noise {
            sc.noise = match (n.sigma2, n.temperature_k, n.noise_figure_db) {
                (Some(s), None, None) => NoiseSpec::Explicit { sigma2: s },
                (Some(_), _, _) => {
                    return Err(Error::Config(
                        "noise: sigma2 excludes temperature_k/noise_figure_db".into(),
                    ))
                }
                (None, t, f) => {
                    let NoiseSpec::Thermal { temperature_k, noise_figure_db } = NoiseSpec::default()
                    else {
                        unreachable!("default noise is thermal")
                    };
                    NoiseSpec::Thermal {
                        temperature_k: t.unwrap_or(temperature_k),
                        noise_figure_db: f.unwrap_or(noise_figure_db),
                    }
                }
            };
        }
        if let Some(targets) = self.target {
            sc.targets = targets
                .into_iter()
                .map(|t| Target {
                    range: t.range,
                    velocity: t.velocity.unwrap_or(0.0),
                    angle: t.angle.unwrap_or_else(|| elevation_from_height(BS_HEIGHT, t.range)),
                    rcs: t.rcs.unwrap_or(10.0),
                })
                .collect();
        }
        sc.pt_dbm = self.pt_dbm.unwrap_or(sc.pt_dbm);
        sc.gt_db = self.gt_db.unwrap_or(sc.gt_db);
        sc.gr_db = self.gr_db.unwrap_or(sc.gr_db);
        sc.seed = self.seed.unwrap_or(sc.seed);
        sc.music_snapshots = self.music_snapshots.unwrap_or(sc.music_snapshots);
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn derived_timing() {
        let n = OfdmNumerology::table_one();
        assert!(close(n.ts() * n.nc as f64, n.td(), 1e-15));
        assert_eq!(n.cp_samples(), 290);
        assert!((n.cp_samples() as f64 * n.ts() - n.tcp).abs() < n.ts());
        assert!(close(n.t(), 8.9233e-6, 1e-4));
        assert!(close(n.bandwidth(), 491.52e6, 1e-15));
        assert_eq!(n.block_len(), 4386);
    }

    #[test]
    fn delay_and_doppler() {
        assert!(close(round_trip_delay(500.0, C0).unwrap(), 3.3333e-6, 1e-4));
        assert!(close(round_trip_delay(88.5, C0).unwrap(), 0.59e-6, 1e-12));
        assert!(round_trip_delay(1e-12, C0).unwrap() < 1e-19);
        assert!(round_trip_delay(0.0, C0).is_err());
        assert!(round_trip_delay(-3.0, C0).is_err());
        assert!(close(doppler_shift(60.0, 28e9, C0), 11.2e3, 1e-12));
        assert!(close(doppler_shift(40.0, 28e9, C0), 7466.6667, 1e-7));
        assert_eq!(doppler_shift(0.0, 28e9, C0), 0.0);
        assert!(doppler_shift(-40.0, 28e9, C0) < 0.0);
    }

    #[test]
    fn offsets_for_paper_targets() {
        let n = OfdmNumerology::table_one();
        let far = sample_offsets(round_trip_delay(500.0, C0).unwrap(), &n).unwrap();
        assert_eq!(far, SampleOffsets { ne: 1348, ns: 1638 });
        let near = sample_offsets(round_trip_delay(260.0, C0).unwrap(), &n).unwrap();
        assert_eq!(near, SampleOffsets { ne: 562, ns: 852 });
        let inside = sample_offsets(0.5e-6, &n).unwrap();
        assert_eq!(inside.ne, 0);
        assert!(sample_offsets(n.td(), &n).is_err());
        assert!(sample_offsets(-1e-9, &n).is_err());
    }

    #[test]
    fn range_limits() {
        let n = OfdmNumerology::table_one();
        assert!(close(max_unambiguous_range(&n), 1250.0, 1e-12));
        assert!(close(max_cp_range(&n), 88.5, 1e-12));
        let doubled = OfdmNumerology { delta_f: 240e3, ..n };
        assert!(close(max_unambiguous_range(&doubled), 625.0, 1e-12));
    }

    #[test]
    fn numerology_rejects_bad_cp() {
        assert!(OfdmNumerology::new(28e9, 120e3, 4096, 256, 0.0).is_err());
        assert!(OfdmNumerology::new(28e9, 120e3, 4096, 256, 1e-12).is_err());
        assert!(OfdmNumerology::new(28e9, 120e3, 64, 4, 9e-6).is_err());
        assert!(OfdmNumerology::new(28e9, 120e3, 64, 4, 0.59e-6).is_ok());
    }

    #[test]
    fn default_scenario_is_valid() {
        let sc = Scenario::default();
        sc.validate().unwrap();
        assert_eq!(sc.peak_bin(0), (1638, 17));
        assert_eq!(sc.peak_bin(1), (852, 26));
        // The close-range target sits half a beamwidth away from the UE.
        let sep = sc.targets[1].angle - sc.targets[0].angle;
        assert!((sep - 3.18).abs() < 0.01, "{sep}");
    }

    #[test]
    fn scenario_rejects_duplicates_and_overflow() {
        let mut sc = Scenario::default();
        sc.targets[1].angle = sc.targets[0].angle;
        assert!(sc.validate().is_err());
        let mut sc = Scenario::default();
        sc.targets = vec![sc.targets[0]; 17];
        for (i, t) in sc.targets.iter_mut().enumerate() {
            t.angle = i as f64;
        }
        assert!(sc.validate().is_err());
        let mut sc = Scenario::default();
        sc.targets.clear();
        assert!(sc.validate().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let sc = Scenario::from_toml_str("").unwrap();
        assert_eq!(sc, Scenario::default());
        let sc = Scenario::from_toml_str(
            r#"
            pt_dbm = 40
            seed = 9
            [noise]
            sigma2 = 1e-9
            [[target]]
            range = 300
            velocity = 10
            angle = 1.5
            "#,
        )
        .unwrap();
        assert_eq!(sc.pt_dbm, 40.0);
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.noise, NoiseSpec::Explicit { sigma2: 1e-9 });
        assert_eq!(sc.targets.len(), 1);
        assert_eq!(sc.targets[0].rcs, 10.0);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(Scenario::from_toml_str("pt_dmb = 40").is_err());
        assert!(Scenario::from_toml_str("[numerology]\nnfft = 64").is_err());
        assert!(Scenario::from_toml_str("[noise]\nsigma2 = 1.0\nnoise_figure_db = 3").is_err());
    }
}
