use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohsense::channel::EchoField;
use cohsense::numerology::Scenario;
use cohsense::sensing::{cfar_detect, cluster_detections, write_detections_csv, CfarConfig};
use cohsense::waveform::SymbolGrid;
use cohsense_harness::experiment::{
    estimate_in_beam, for_each_map, na_sweep_points, parse_methods, trial_rng, ExperimentSpec, Method, NaPolicy, Sweep, TrialContext,
};
use cohsense_harness::output::write_experiment;
use cohsense_harness::plot::{LineChart, Series};
use cohsense_harness::{run_experiment, Result};

#[derive(Parser)]
#[command(name = "cohsense", version, about = "Two-target OFDM sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML; the built-in 500 m / 260 m scene when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value = "fft2d,sep,snc")]
    methods: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the true angles instead of MUSIC estimates.
    #[arg(long)]
    oracle_angles: bool,
    #[arg(long, default_value_t = 1e-11)]
    pfa: f64,
    /// `ns`, `ne`, `optimal`, `range:<m>` or `samples:<n>`.
    #[arg(long)]
    na_policy: Option<NaPolicy>,
}

#[derive(Subcommand)]
enum Command {
    /// MUSIC spectrum of one frame, written as CSV and SVG.
    DoaSpectrum(Common),
    /// Compensation length sweep, the same Na for every target.
    SweepNa {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sample counts; defaults to points around Ne and Ns of target 0.
        #[arg(long, value_delimiter = ',')]
        na_list: Option<Vec<usize>>,
    },
    /// Transmit power sweep.
    SweepPower {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "26,30,34,38,42,46")]
        powers: Vec<f64>,
    },
    /// Moves target 0 over a list of ranges.
    SweepRange {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "400,450,500,550,600,650,700,750,800")]
        ranges: Vec<f64>,
    },
    /// One frame: range-Doppler maps and CFAR detections per method.
    SingleRun(Common),
}

fn load(common: &Common) -> Result<Scenario> {
    let mut sc = match &common.scenario {
        Some(p) => Scenario::from_file(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn spec(common: &Common, scenario: Scenario, sweep: Sweep, default_policy: NaPolicy) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(scenario, sweep);
    spec.methods = parse_methods(&common.methods)?;
    spec.trials = common.trials;
    spec.na_policy = common.na_policy.unwrap_or(default_policy);
    spec.oracle_angles = common.oracle_angles;
    spec.cfar = CfarConfig {
        pfa: common.pfa,
        ..CfarConfig::default()
    };
    Ok(spec)
}

fn sweep(common: &Common, stem: &str, sweep: Sweep, policy: NaPolicy) -> Result<()> {
    let sc = load(common)?;
    let seed = sc.seed;
    let spec = spec(common, sc, sweep, policy)?;
    let rows = run_experiment(&spec, seed)?;
    write_experiment(&common.out, stem, &spec.sweep, &rows)?;
    for r in &rows {
        println!(
            "{:>8} {:>5} u={} na={:>4} sim={:>7.2} dB theory={:>7.2} dB pd={:.3}±{:.3}",
            r.sweep_value, r.method, r.target_index, r.na, r.sinr_rdm_db_sim, r.sinr_rdm_db_theory, r.pd, r.pd_ci95
        );
    }
    println!("wrote {}", common.out.join(format!("{stem}.csv")).display());
    Ok(())
}

fn doa_spectrum(common: &Common) -> Result<()> {
    let sc = load(common)?;
    let spec = spec(common, sc.clone(), Sweep::None, NaPolicy::PerTargetOptimal)?;
    let ctx = TrialContext::new(&sc, spec.na_policy, &spec)?;
    let mut rng = trial_rng(sc.seed, 0);
    let num = sc.numerology;
    let grid = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut rng);
    let tx = ctx.ofdm.modulate(&grid)?;
    let mut field = EchoField::new(&tx, &sc)?;
    let est = estimate_in_beam(&ctx, &mut field, &mut rng)?;
    fs::create_dir_all(&common.out)?;
    est.spectrum.write_csv(BufWriter::new(fs::File::create(common.out.join("doa_spectrum.csv"))?))?;
    let peak = est.spectrum.peak_db();
    let chart = LineChart {
        title: "MUSIC spectrum".into(),
        x_label: "angle (deg)".into(),
        y_label: "normalized P (dB)".into(),
        series: vec![Series {
            name: "MUSIC".into(),
            points: est
                .spectrum
                .grid
                .iter()
                .zip(&est.spectrum.values)
                .map(|(&a, &v)| (a, 10.0 * v.log10() - peak))
                .collect(),
            dashed: false,
        }],
    };
    fs::write(common.out.join("doa_spectrum.svg"), chart.render())?;
    for (u, t) in ctx.targets.iter().enumerate() {
        println!("target {u}: true {:.4}°", t.echo.angle);
    }
    println!("estimates: {:?}", est.angles);
    Ok(())
}

fn single_run(common: &Common) -> Result<()> {
    let sc = load(common)?;
    let spec = spec(common, sc.clone(), Sweep::None, NaPolicy::PerTargetOptimal)?;
    let ctx = TrialContext::new(&sc, spec.na_policy, &spec)?;
    let out: &Path = &common.out;
    fs::create_dir_all(out)?;
    let mut rng = trial_rng(sc.seed, 0);
    let doa = for_each_map(&ctx, &spec.methods, &mut rng, |m, targets, map| {
        let stem = match m {
            Method::Fft2d => m.to_string(),
            _ => format!("{m}_target{}", targets[0]),
        };
        map.write_csv(BufWriter::new(fs::File::create(out.join(format!("rdm_{stem}.csv")))?))?;
        map.write_binary(BufWriter::new(fs::File::create(out.join(format!("rdm_{stem}.bin")))?))?;
        let dets = cluster_detections(&cfar_detect(map, &spec.cfar)?, map.nc(), map.m());
        write_detections_csv(&dets, map, fs::File::create(out.join(format!("detections_{stem}.csv")))?)?;
        println!("{stem}: {} detection clusters", dets.len());
        for d in &dets {
            println!("  k={} l={} range={:.2} m velocity={:.2} m/s", d.k, d.l, map.range_of(d.k), map.velocity_of(d.l));
        }
        Ok(())
    })?;
    if let Some(angles) = doa {
        println!("MUSIC angles: {angles:?}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DoaSpectrum(c) => doa_spectrum(&c),
        Command::SweepNa { common, na_list } => {
            let sc = load(&common)?;
            let pts = match na_list {
                Some(v) => v,
                None => na_sweep_points(&sc)?,
            };
            sweep(&common, "sweep_na", Sweep::Na(pts), NaPolicy::PerTargetOptimal)
        }
        Command::SweepPower { common, powers } => {
            sweep(&common, "sweep_power", Sweep::PowerDbm(powers), NaPolicy::PerTargetOptimal)
        }
        Command::SweepRange { common, ranges } => {
            sweep(&common, "sweep_range", Sweep::RangeM(ranges), NaPolicy::FixedRange(500.0))
        }
        Command::SingleRun(c) => single_run(&c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
