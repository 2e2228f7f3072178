use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::experiment::{ResultRow, Sweep};
use crate::plot::{LineChart, Series};

pub const RESULT_HEADER: &str =
    "sweep_value,method,target_index,na,sinr_rdm_db_sim,sinr_rdm_db_theory,pd,pd_ci95,trials_used";

pub fn write_results_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{}",
            r.sweep_value,
            r.method,
            r.target_index,
            r.na,
            r.sinr_rdm_db_sim,
            r.sinr_rdm_db_theory,
            r.pd,
            r.pd_ci95,
            r.trials_used
        )?;
    }
    Ok(())
}

pub fn sweep_label(sweep: &Sweep) -> &'static str {
    match sweep {
        Sweep::None => "run",
        Sweep::Na(_) => "Na (samples)",
        Sweep::PowerDbm(_) => "Pt (dBm)",
        Sweep::RangeM(_) => "range of target 0 (m)",
    }
}

fn series_by<F: Fn(&ResultRow) -> f64>(rows: &[ResultRow], f: F, suffix: &str, dashed: bool) -> Vec<Series> {
    let mut keys: Vec<_> = rows.iter().map(|r| (r.method, r.target_index)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(m, u)| Series {
            name: format!("{m} target {u}{suffix}"),
            points: rows
                .iter()
                .filter(|r| r.method == m && r.target_index == u)
                .map(|r| (r.sweep_value, f(r)))
                .filter(|p| p.1.is_finite())
                .collect(),
            dashed,
        })
        .collect()
}

/// Writes `<stem>.csv`, `<stem>_sinr.svg` and `<stem>_pd.svg` under `dir`.
pub fn write_experiment(dir: &Path, stem: &str, sweep: &Sweep, rows: &[ResultRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results_csv(rows, fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    if matches!(sweep, Sweep::None) {
        return Ok(());
    }
    let x_label = sweep_label(sweep);
    let mut sinr = series_by(rows, |r| r.sinr_rdm_db_sim, "", false);
    sinr.extend(series_by(rows, |r| r.sinr_rdm_db_theory, " theory", true));
    let chart = LineChart {
        title: format!("{stem}: RDM SINR"),
        x_label: x_label.into(),
        y_label: "RDM SINR (dB)".into(),
        series: sinr,
    };
    fs::write(dir.join(format!("{stem}_sinr.svg")), chart.render())?;
    let chart = LineChart {
        title: format!("{stem}: detection probability"),
        x_label: x_label.into(),
        y_label: "Pd".into(),
        series: series_by(rows, |r| r.pd, "", false),
    };
    fs::write(dir.join(format!("{stem}_pd.svg")), chart.render())?;
    Ok(())
}
