use std::process::Command;

use cohsense::numerology::Scenario;
use cohsense_harness::experiment::{run_trials, trial_rng, ExperimentSpec, Method, NaPolicy, Sweep, TrialContext};
use cohsense_harness::output::RESULT_HEADER;
use cohsense_harness::{run_experiment, run_trial, HarnessError};

/// 256 subcarriers and 64 symbols so trials take milliseconds; delays of
/// 100 and 60 samples against an 18-sample CP.
const SMALL: &str = r#"
[numerology]
nc = 256
m = 64
tcp = 5.859375e-7

[[target]]
range = 488.28125
velocity = 40.0

[[target]]
range = 292.96875
velocity = 60.0
"#;

fn small() -> Scenario {
    Scenario::from_toml_str(SMALL).unwrap()
}

fn spec(sweep: Sweep) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(small(), sweep);
    s.trials = 6;
    s
}

#[test]
fn small_scene_offsets() {
    let sc = small();
    assert_eq!(sc.numerology.cp_samples(), 18);
    let o = sc.offsets(0).unwrap();
    assert_eq!((o.ne, o.ns), (82, 100));
}

#[test]
fn same_seed_same_rows() {
    let s = spec(Sweep::PowerDbm(vec![40.0, 46.0]));
    let a = run_experiment(&s, 9).unwrap();
    let b = run_experiment(&s, 9).unwrap();
    assert_eq!(a, b);
    let c = run_experiment(&s, 10).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.len(), 2 * 3 * 2);
    for r in &a {
        assert!((0.0..=1.0).contains(&r.pd));
        assert!(r.sinr_rdm_db_sim.is_finite() && r.sinr_rdm_db_theory.is_finite());
        assert_eq!(r.trials_used, 6);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = spec(Sweep::None);
    let ctx = TrialContext::new(&s.scenario, s.na_policy, &s).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_trials(&ctx, &s.methods, 3, 5).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn trial_outcome_matches_standalone_trial() {
    let s = spec(Sweep::None);
    let ctx = TrialContext::new(&s.scenario, s.na_policy, &s).unwrap();
    let all = run_trials(&ctx, &s.methods, 4, 3).unwrap();
    let one = run_trial(&ctx, &s.methods, &mut trial_rng(4, 2)).unwrap();
    assert_eq!(all[2], one);
    assert_eq!(one.methods.len(), 3);
    assert!(one.doa.is_some());
}

#[test]
fn oracle_angles_skip_estimation() {
    let mut s = spec(Sweep::None);
    s.oracle_angles = true;
    let ctx = TrialContext::new(&s.scenario, s.na_policy, &s).unwrap();
    let out = run_trial(&ctx, &[Method::Snc], &mut trial_rng(1, 0)).unwrap();
    assert!(out.doa.is_none());
    assert_eq!(out.methods[0].0, Method::Snc);
}

#[test]
fn na_policies_resolve_per_target() {
    let s = spec(Sweep::None);
    let plan = |p| {
        TrialContext::new(&s.scenario, p, &s)
            .unwrap()
            .targets
            .iter()
            .map(|t| t.na)
            .collect::<Vec<_>>()
    };
    assert_eq!(plan(NaPolicy::PerTargetNs), vec![100, 60]);
    assert_eq!(plan(NaPolicy::PerTargetNe), vec![82, 42]);
    assert_eq!(plan(NaPolicy::FixedSamples(7)), vec![7, 7]);
    assert_eq!(plan(NaPolicy::FixedRange(488.28125)), vec![100, 100]);
    for na in plan(NaPolicy::PerTargetOptimal) {
        assert!(na == 100 || na == 82 || na == 60 || na == 42);
    }
}

#[test]
fn trial_errors_carry_the_trial_index() {
    let mut s = spec(Sweep::None);
    // Second target far outside the MUSIC search window.
    s.scenario.targets[1].angle = 40.0;
    let ctx = TrialContext::new(&s.scenario, s.na_policy, &s).unwrap();
    match run_trials(&ctx, &[Method::Sep], 1, 2) {
        Err(HarnessError::Trial { index, .. }) => assert_eq!(index, 0),
        other => panic!("expected a trial error, got {other:?}"),
    }
}

#[test]
fn zero_trials_rejected() {
    let mut s = spec(Sweep::None);
    s.trials = 0;
    assert!(matches!(run_experiment(&s, 1), Err(HarnessError::InvalidSpec(_))));
}

#[test]
fn cli_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.toml");
    std::fs::write(&scenario, SMALL).unwrap();
    let out = dir.path().join("out");
    let bin = env!("CARGO_BIN_EXE_cohsense");
    let run = |args: &[&str]| {
        let status = Command::new(bin)
            .args(args)
            .args(["--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    };
    run(&["sweep-power", "--trials", "2", "--powers", "40,46"]);
    let csv = std::fs::read_to_string(out.join("sweep_power.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(RESULT_HEADER));
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
    assert!(out.join("sweep_power_sinr.svg").exists());
    assert!(out.join("sweep_power_pd.svg").exists());

    run(&["sweep-na", "--trials", "1", "--methods", "snc", "--na-list", "0,82", "--oracle-angles"]);
    assert!(std::fs::read_to_string(out.join("sweep_na.csv")).unwrap().contains(",snc,0,82,"));

    run(&["single-run", "--methods", "fft2d,snc"]);
    for f in ["rdm_fft2d.csv", "rdm_fft2d.bin", "detections_snc_target0.csv", "rdm_snc_target1.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    run(&["doa-spectrum"]);
    let spectrum = std::fs::read_to_string(out.join("doa_spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("angle_deg,p_music"));
}

#[test]
fn cli_rejects_bad_methods() {
    let out = Command::new(env!("CARGO_BIN_EXE_cohsense"))
        .args(["sweep-power", "--methods", "fft2d,capon", "--trials", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown method"));
}
