//! Monte-Carlo experiments comparing plain beamforming, LS separation, and
//! separation with coherent compensation on a shared-beam two-target scene.

pub mod error;
pub mod experiment;
pub mod output;
pub mod plot;

pub use error::{HarnessError, Result};
pub use experiment::{
    run_experiment, run_trial, run_trials, ExperimentSpec, Method, NaPolicy, ResultRow, Sweep, TargetOutcome,
    TrialContext, TrialOutcome,
};
