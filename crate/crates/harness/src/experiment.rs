//! Per-trial pipelines for the three receivers and the Monte-Carlo sweep
//! driver that aggregates them.

use std::fmt;
use std::str::FromStr;

use cohsense::array::{build_separator, half_power_beamwidth, ls_beamformer, rx_steering, dot, Side};
use cohsense::channel::{target_echoes, EchoField, TargetEcho};
use cohsense::doa::{estimate_doas, DoaEstimate};
use cohsense::linalg::CMatrix;
use cohsense::numerology::{round_trip_delay, sample_offsets, Scenario, C0};
use cohsense::sensing::{demod_grid, detected_near, measure_rdm_sinr, CfarConfig, GuardBox, RangeDopplerMap, RdmEngine};
use cohsense::theory::{self, BlockSinrInputs, RdmMethod, RdmSinrInputs, TradTerm};
use cohsense::waveform::{mean_inverse_power, Ofdm, SymbolGrid};
use cohsense::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

/// MUSIC grid spacing inside the beam, degrees.
pub const DOA_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Beamforming toward target 0, no separation.
    Fft2d,
    /// LS separation only.
    Sep,
    /// LS separation plus coherent compensation.
    Snc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fft2d, Method::Sep, Method::Snc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fft2d => "fft2d",
            Method::Sep => "sep",
            Method::Snc => "snc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fft2d" => Ok(Method::Fft2d),
            "sep" => Ok(Method::Sep),
            "snc" => Ok(Method::Snc),
            other => Err(HarnessError::InvalidSpec(format!(
                "unknown method {other:?}; expected fft2d, sep or snc"
            ))),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods = list.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
    methods.sort();
    methods.dedup();
    Ok(methods)
}

/// How the compensation length is chosen for each target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NaPolicy {
    PerTargetNs,
    PerTargetNe,
    /// Whichever of `Ne`, `Ns` the block-SINR closed form prefers.
    PerTargetOptimal,
    /// One length for every target: the delay in samples of a target at
    /// this range, m.
    FixedRange(f64),
    FixedSamples(usize),
}

impl FromStr for NaPolicy {
    type Err = HarnessError;

    /// `ns`, `ne`, `optimal`, `range:<m>` or `samples:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || HarnessError::InvalidSpec(format!("bad Na policy {s:?}"));
        match s.trim() {
            "ns" | "per_target_ns" => Ok(NaPolicy::PerTargetNs),
            "ne" | "per_target_ne" => Ok(NaPolicy::PerTargetNe),
            "optimal" => Ok(NaPolicy::PerTargetOptimal),
            other => {
                let (kind, value) = other.split_once(':').ok_or_else(bad)?;
                match kind {
                    "range" | "fixed" => Ok(NaPolicy::FixedRange(value.parse().map_err(|_| bad())?)),
                    "samples" => Ok(NaPolicy::FixedSamples(value.parse().map_err(|_| bad())?)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

impl fmt::Display for NaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NaPolicy::PerTargetNs => f.write_str("ns"),
            NaPolicy::PerTargetNe => f.write_str("ne"),
            NaPolicy::PerTargetOptimal => f.write_str("optimal"),
            NaPolicy::FixedRange(r) => write!(f, "range:{r}"),
            NaPolicy::FixedSamples(n) => write!(f, "samples:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    None,
    /// One compensation length applied to every target.
    Na(Vec<usize>),
    PowerDbm(Vec<f64>),
    /// Moves target 0 only; its angle is left unchanged.
    RangeM(Vec<f64>),
}

impl Sweep {
    fn points(&self) -> Vec<f64> {
        match self {
            Sweep::None => vec![f64::NAN],
            Sweep::Na(v) => v.iter().map(|&n| n as f64).collect(),
            Sweep::PowerDbm(v) | Sweep::RangeM(v) => v.clone(),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Sweep::None => false,
            Sweep::Na(v) => v.is_empty(),
            Sweep::PowerDbm(v) | Sweep::RangeM(v) => v.is_empty(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub sweep: Sweep,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub na_policy: NaPolicy,
    pub oracle_angles: bool,
    pub cfar: CfarConfig,
    /// Association radius, in bins, between a CFAR hit and a target peak.
    pub detect_radius: usize,
    pub guard: GuardBox,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, sweep: Sweep) -> Self {
        Self {
            scenario,
            sweep,
            methods: Method::ALL.to_vec(),
            trials: 200,
            na_policy: NaPolicy::PerTargetOptimal,
            oracle_angles: false,
            cfar: CfarConfig::default(),
            detect_radius: 1,
            guard: GuardBox::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(HarnessError::InvalidSpec("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidSpec("no methods selected".into()));
        }
        if self.sweep.is_empty() {
            return Err(HarnessError::InvalidSpec("sweep list is empty".into()));
        }
        self.scenario.validate()?;
        Ok(())
    }

    /// Scenario and Na policy at one sweep point.
    pub fn point(&self, value: f64) -> Result<(Scenario, NaPolicy)> {
        let mut sc = self.scenario.clone();
        let mut policy = self.na_policy;
        match &self.sweep {
            Sweep::None => {}
            Sweep::Na(_) => policy = NaPolicy::FixedSamples(value as usize),
            Sweep::PowerDbm(_) => sc.pt_dbm = value,
            Sweep::RangeM(_) => sc.targets[0].range = value,
        }
        sc.validate()?;
        Ok((sc, policy))
    }
}

/// Default compensation lengths for a sweep: points up to target 0's `Ne`,
/// between `Ne` and `Ns`, and 200 samples past `Ns`.
pub fn na_sweep_points(sc: &Scenario) -> Result<Vec<usize>> {
    let o = sc.offsets(0)?;
    let (ne, ns) = (o.ne, o.ns);
    let mut pts = vec![0, ne / 4, ne / 2, 3 * ne / 4, ne, (ne + ns) / 2, ns, (ns + 200).min(sc.numerology.nc)];
    pts.dedup();
    Ok(pts)
}

/// Per-target quantities that do not change between trials.
#[derive(Debug, Clone)]
pub struct TargetPlan {
    pub echo: TargetEcho,
    pub peak: (usize, usize),
    pub na: usize,
    pub fdt: f64,
    /// Linear closed-form SINR per method, before the `+1` is removed.
    pub theory: Vec<(Method, f64)>,
}

/// Everything a trial needs that is shared across trials at one sweep point.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub scenario: Scenario,
    pub ofdm: Ofdm<f64>,
    pub rdm: RdmEngine<f64>,
    pub targets: Vec<TargetPlan>,
    pub w_rx: Vec<Complex<f64>>,
    pub beam_halfwidth: f64,
    pub cfar: CfarConfig,
    pub detect_radius: usize,
    pub guard: GuardBox,
    pub oracle_angles: bool,
}

pub fn resolve_na(policy: NaPolicy, echo: &TargetEcho, gamma0: f64, fdt: f64, scenario: &Scenario) -> Result<usize> {
    let num = &scenario.numerology;
    let o = echo.offsets;
    Ok(match policy {
        NaPolicy::PerTargetNs => o.ns,
        NaPolicy::PerTargetNe => o.ne,
        NaPolicy::PerTargetOptimal => theory::optimal_na(o.ne, o.ns, num.nc, gamma0, fdt).argmax,
        NaPolicy::FixedRange(r) => sample_offsets(round_trip_delay(r, C0)?, num)?.ns,
        NaPolicy::FixedSamples(n) => n,
    }
    .min(num.nc))
}

impl TrialContext {
    pub fn new(scenario: &Scenario, policy: NaPolicy, spec: &ExperimentSpec) -> Result<Self> {
        scenario.validate()?;
        let num = scenario.numerology;
        let geometry = scenario.geometry;
        let echoes = target_echoes(scenario)?;
        let angles: Vec<f64> = echoes.iter().map(|e| e.angle).collect();
        let sep = build_separator::<f64>(&angles, &geometry)?;
        let w_rx = ls_beamformer::<f64>(scenario.targets[0].angle, &geometry, Side::Receive);
        let sigma2 = scenario.sigma2();
        let e_inv = mean_inverse_power();
        let nc = num.nc as f64;
        let trad_terms: Vec<TradTerm<f64>> = echoes
            .iter()
            .map(|e| {
                let combiner = dot(&w_rx, &rx_steering::<f64>(e.angle, &geometry).elements);
                TradTerm {
                    ne: e.offsets.ne as f64 / nc,
                    gain2: e.gain2() * combiner.norm_sqr(),
                }
            })
            .collect();
        let w_norm2: f64 = w_rx.iter().map(|w| w.norm_sqr()).sum();
        let mut targets = Vec::with_capacity(echoes.len());
        for (u, echo) in echoes.iter().enumerate() {
            let fdt = echo.doppler * num.t();
            let lambda_u = sep.lambda[u];
            let gamma0 = theory::gamma0(echo.gain2(), lambda_u, sigma2, 1.0);
            let na = resolve_na(policy, echo, gamma0, fdt, scenario)?;
            let mut inputs = RdmSinrInputs {
                block: BlockSinrInputs {
                    ne: echo.offsets.ne as f64 / nc,
                    na: 0.0,
                    ns: echo.offsets.ns as f64 / nc,
                    gamma0,
                    fdt,
                },
                m: num.m,
                nc: num.nc,
                lambda_u,
                sigma2,
                mean_inv_symbol_power: e_inv,
                gain2: echo.gain2(),
                symbol_power: 1.0,
            };
            let mut theory_vals = Vec::new();
            for &m in &spec.methods {
                let v = match m {
                    Method::Fft2d => theory::sinr_rdm(RdmMethod::Trad, &inputs, Some((u, &trad_terms, w_norm2))),
                    Method::Sep => theory::sinr_rdm(RdmMethod::Sep, &inputs, None),
                    Method::Snc => {
                        inputs.block.na = na as f64 / nc;
                        let v = theory::sinr_rdm(RdmMethod::Cc, &inputs, None);
                        inputs.block.na = 0.0;
                        v
                    }
                };
                theory_vals.push((m, v.expect("trad terms supplied")));
            }
            targets.push(TargetPlan {
                echo: *echo,
                peak: scenario.peak_bin(u),
                na,
                fdt,
                theory: theory_vals,
            });
        }
        Ok(Self {
            scenario: scenario.clone(),
            ofdm: Ofdm::new(&num)?,
            rdm: RdmEngine::new(&num),
            targets,
            w_rx,
            beam_halfwidth: half_power_beamwidth(geometry.nt, geometry.dt, geometry.wavelength),
            cfar: spec.cfar,
            detect_radius: spec.detect_radius,
            guard: spec.guard,
            oracle_angles: spec.oracle_angles,
        })
    }

    pub fn peaks(&self) -> Vec<(usize, usize)> {
        self.targets.iter().map(|t| t.peak).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOutcome {
    pub rdm_sinr_db: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// One entry per requested method, each with one outcome per target.
    pub methods: Vec<(Method, Vec<TargetOutcome>)>,
    /// Estimated angles in target order, when MUSIC ran.
    pub doa: Option<Vec<f64>>,
}

/// Pairs ascending estimates with targets by ascending true angle.
fn assign_angles(estimates: &[f64], truth: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[a].partial_cmp(&truth[b]).expect("finite"));
    let mut out = vec![0.0; truth.len()];
    for (est, &u) in estimates.iter().zip(&order) {
        out[u] = *est;
    }
    out
}

fn stream_map(
    ctx: &TrialContext,
    stream: &[Complex<f64>],
    tx: &SymbolGrid<f64>,
    na: usize,
) -> Result<RangeDopplerMap<f64>> {
    let rx_grid = demod_grid(&ctx.ofdm, stream, na)?.grid;
    Ok(ctx.rdm.build(&rx_grid, tx)?)
}

/// Synthesizes one frame and hands every receiver's range-Doppler map to
/// `visit` together with the targets it is evaluated for. All methods see
/// the same payload, echoes and noise. Returns the MUSIC angles when
/// estimation ran.
pub fn for_each_map<F>(ctx: &TrialContext, methods: &[Method], rng: &mut ChaCha8Rng, mut visit: F) -> Result<Option<Vec<f64>>>
where
    F: FnMut(Method, &[usize], &RangeDopplerMap<f64>) -> Result<()>,
{
    let sc = &ctx.scenario;
    let num = sc.numerology;
    let u_count = ctx.targets.len();
    let tx_grid = SymbolGrid::<f64>::random_qam16(num.nc, num.m, rng);
    let tx = ctx.ofdm.modulate(&tx_grid)?;
    let mut field = EchoField::new(&tx, sc)?;

    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let needs_sep = methods.iter().any(|m| matches!(m, Method::Sep | Method::Snc));
    let truth: Vec<f64> = ctx.targets.iter().map(|t| t.echo.angle).collect();
    let mut doa = None;
    let angles = if needs_sep && !ctx.oracle_angles {
        let est = estimate_in_beam(ctx, &mut field, rng)?;
        let assigned = assign_angles(&est.angles, &truth);
        doa = Some(assigned.clone());
        assigned
    } else {
        truth
    };

    if methods.contains(&Method::Fft2d) {
        let w = CMatrix::from_row_major(1, ctx.w_rx.len(), ctx.w_rx.clone())?;
        let combined = field.project(&w, Some(&mut *rng))?;
        let map = stream_map(ctx, combined.channel(0), &tx_grid, 0)?;
        let all: Vec<usize> = (0..u_count).collect();
        visit(Method::Fft2d, &all, &map)?;
    }
    if needs_sep {
        let sep = build_separator::<f64>(&angles, &sc.geometry)?;
        let streams = field.project(&sep.pinv, Some(&mut *rng))?;
        for &m in methods.iter().filter(|m| **m != Method::Fft2d) {
            for u in 0..u_count {
                let na = if m == Method::Snc { ctx.targets[u].na } else { 0 };
                let map = stream_map(ctx, streams.channel(u), &tx_grid, na)?;
                visit(m, &[u], &map)?;
            }
        }
    }
    Ok(doa)
}

/// MUSIC over the transmit beam using snapshots from symbol 1's window.
/// Symbol 0's window holds no echo yet once the delay exceeds the CP.
pub fn estimate_in_beam(ctx: &TrialContext, field: &mut EchoField<f64>, rng: &mut ChaCha8Rng) -> Result<DoaEstimate> {
    let sc = &ctx.scenario;
    let start = ctx.ofdm.window_start(1.min(sc.numerology.m - 1));
    let y = field.snapshots(start, sc.music_snapshots, rng)?;
    Ok(estimate_doas(
        &y,
        ctx.targets.len(),
        ctx.targets[0].echo.angle,
        ctx.beam_halfwidth,
        DOA_GRID_STEP,
        &sc.geometry,
    )?)
}

pub fn run_trial(ctx: &TrialContext, methods: &[Method], rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let peaks = ctx.peaks();
    let mut results: Vec<(Method, Vec<TargetOutcome>)> = Vec::new();
    let doa = for_each_map(ctx, methods, rng, |m, targets, map| {
        if results.last().map(|r| r.0) != Some(m) {
            results.push((m, vec![TargetOutcome { rdm_sinr_db: f64::NAN, detected: false }; ctx.targets.len()]));
        }
        let slot = &mut results.last_mut().expect("pushed").1;
        for &u in targets {
            let (k, l) = ctx.targets[u].peak;
            slot[u] = TargetOutcome {
                rdm_sinr_db: measure_rdm_sinr(map, (k, l), &peaks, ctx.guard)?,
                detected: detected_near(map, &ctx.cfar, k, l, ctx.detect_radius)?,
            };
        }
        Ok(())
    })?;
    Ok(TrialOutcome { methods: results, doa })
}

/// Independent, reproducible stream for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

pub fn run_trials(ctx: &TrialContext, methods: &[Method], seed: u64, trials: usize) -> Result<Vec<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            run_trial(ctx, methods, &mut trial_rng(seed, i)).map_err(|e| HarnessError::Trial {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub method: Method,
    pub target_index: usize,
    pub na: usize,
    /// Mean over trials in linear power, reported in dB.
    pub sinr_rdm_db_sim: f64,
    /// Closed form with the `+1` removed, matching the peak-to-mean measurement.
    pub sinr_rdm_db_theory: f64,
    pub pd: f64,
    /// Wilson 95% half-width of `pd`.
    pub pd_ci95: f64,
    pub trials_used: usize,
}

/// Wilson score interval half-width at 95%.
pub fn wilson_halfwidth(hits: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let z = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    z / (1.0 + z * z / n_f) * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt()
}

pub fn aggregate(ctx: &TrialContext, sweep_value: f64, outcomes: &[TrialOutcome]) -> Vec<ResultRow> {
    let Some(first) = outcomes.first() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (mi, (method, targets)) in first.methods.iter().enumerate() {
        for u in 0..targets.len() {
            let n = outcomes.len();
            let mut lin = 0.0;
            let mut hits = 0;
            for o in outcomes {
                let t = o.methods[mi].1[u];
                lin += 10f64.powf(t.rdm_sinr_db / 10.0);
                hits += t.detected as usize;
            }
            let plan = &ctx.targets[u];
            let theory = plan
                .theory
                .iter()
                .find(|(m, _)| m == method)
                .map_or(f64::NAN, |(_, v)| 10.0 * (v - 1.0).log10());
            rows.push(ResultRow {
                sweep_value,
                method: *method,
                target_index: u,
                na: if *method == Method::Snc { plan.na } else { 0 },
                sinr_rdm_db_sim: 10.0 * (lin / n as f64).log10(),
                sinr_rdm_db_theory: theory,
                pd: hits as f64 / n as f64,
                pd_ci95: wilson_halfwidth(hits, n),
                trials_used: n,
            });
        }
    }
    rows
}

/// Runs every sweep point and returns the aggregated table.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for value in spec.sweep.points() {
        let (scenario, policy) = spec.point(value)?;
        let ctx = TrialContext::new(&scenario, policy, spec)?;
        let outcomes = run_trials(&ctx, &spec.methods, seed, spec.trials)?;
        rows.extend(aggregate(&ctx, value, &outcomes));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_and_policy_parsing() {
        assert_eq!(parse_methods("snc,fft2d,snc").unwrap(), vec![Method::Fft2d, Method::Snc]);
        assert!(parse_methods("music").is_err());
        assert_eq!("range:500".parse::<NaPolicy>().unwrap(), NaPolicy::FixedRange(500.0));
        assert_eq!("samples:12".parse::<NaPolicy>().unwrap(), NaPolicy::FixedSamples(12));
        assert_eq!("ns".parse::<NaPolicy>().unwrap(), NaPolicy::PerTargetNs);
        assert!("range:abc".parse::<NaPolicy>().is_err());
        let p = NaPolicy::FixedRange(500.0);
        assert_eq!(p.to_string().parse::<NaPolicy>().unwrap(), p);
    }

    #[test]
    fn wilson_width_at_400_trials() {
        assert!(wilson_halfwidth(360, 400) < 0.05);
        assert!(wilson_halfwidth(0, 400) > 0.0);
    }

    #[test]
    fn angle_assignment_follows_true_order() {
        let a = assign_angles(&[3.4, 6.6], &[6.62, 3.44]);
        assert_eq!(a, vec![6.6, 3.4]);
    }

    #[test]
    fn zero_trials_rejected() {
        let mut spec = ExperimentSpec::new(Scenario::default(), Sweep::None);
        spec.trials = 0;
        assert!(spec.validate().is_err());
        spec.trials = 1;
        spec.sweep = Sweep::PowerDbm(vec![]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn fixed_range_policy_uses_delay_samples() {
        let sc = Scenario::default();
        let echoes = target_echoes(&sc).unwrap();
        let na = resolve_na(NaPolicy::FixedRange(500.0), &echoes[1], 1e3, 0.0, &sc).unwrap();
        assert_eq!(na, 1638);
    }
}
