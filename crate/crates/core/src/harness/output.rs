//! CSV artifacts. Every file opens with a `# schema=1` comment line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::config::EstimatorKind;
use super::run::{ExperimentOutput, RegretRow, TimingRow};

pub const SCHEMA_LINE: &str = "# schema=1";

fn open(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    fs::create_dir_all(dir)?;
    let mut file = BufWriter::new(File::create(dir.join(name))?);
    writeln!(file, "{SCHEMA_LINE}")?;
    Ok(csv::Writer::from_writer(file))
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    slot: usize,
    avg_pred_error: f64,
    avg_bellman_error: f64,
    trajectories: usize,
    within_cut: bool,
}

#[derive(Serialize)]
struct StabilityCsvRow {
    trajectory: usize,
    expert: usize,
    family: String,
    lengthscale: f64,
    horizon: usize,
    mean_sq_change: f64,
    cap: f64,
    holds: bool,
}

#[derive(Serialize)]
struct RegretCsvRow {
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(rename = "R")]
    regret: f64,
    #[serde(rename = "R1")]
    regret_r1: f64,
    bound: f64,
    #[serde(rename = "Be")]
    be: f64,
    theta_star_norm: f64,
    #[serde(rename = "R_over_logT")]
    regret_over_log_t: f64,
    trajectories: usize,
}

#[derive(Serialize)]
struct TimingCsvRow {
    method: EstimatorKind,
    window_start: usize,
    window_end: usize,
    median_seconds_per_slot: f64,
}

/// Writes `curves.csv`, `stability.csv` and, for ensembles, `weights.csv`.
/// Returns the paths written.
pub fn write_experiment(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let mut w = open(dir, "curves.csv")?;
    for t in 0..out.curves.len() {
        w.serialize(CurveRow {
            slot: t + 1,
            avg_pred_error: out.curves.avg_prediction_error[t],
            avg_bellman_error: out.curves.avg_bellman_error[t],
            trajectories: out.curves.counts[t],
            within_cut: t < out.truncation_cut,
        })?;
    }
    finish(w)?;
    written.push(dir.join("curves.csv"));

    let mut w = open(dir, "stability.csv")?;
    if out.stability.is_empty() {
        w.write_record([
            "trajectory",
            "expert",
            "family",
            "lengthscale",
            "horizon",
            "mean_sq_change",
            "cap",
            "holds",
        ])?;
    }
    for row in &out.stability {
        w.serialize(StabilityCsvRow {
            trajectory: row.trajectory,
            expert: row.expert,
            family: row.kernel.family.to_string(),
            lengthscale: row.kernel.lengthscale,
            horizon: row.report.horizon,
            mean_sq_change: row.report.mean_sq_change,
            cap: row.report.cap,
            holds: row.report.holds(),
        })?;
    }
    finish(w)?;
    written.push(dir.join("stability.csv"));

    if let Some(weights) = &out.weights {
        let mut w = open(dir, "weights.csv")?;
        let mut header = vec!["slot".to_string()];
        header.extend((0..out.kernels.len()).map(|m| format!("w{m}")));
        w.write_record(&header)?;
        for (t, wt) in weights.iter().enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(wt.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        finish(w)?;
        written.push(dir.join("weights.csv"));
    }
    Ok(written)
}

pub fn write_regret(rows: &[RegretRow], dir: &Path) -> Result<PathBuf> {
    let mut w = open(dir, "regret.csv")?;
    for r in rows {
        w.serialize(RegretCsvRow {
            horizon: r.horizon,
            regret: r.regret,
            regret_r1: r.regret_r1,
            bound: r.bound,
            be: r.be,
            theta_star_norm: r.theta_star_norm,
            regret_over_log_t: r.regret_over_log_t(),
            trajectories: r.trajectories,
        })?;
    }
    finish(w)?;
    Ok(dir.join("regret.csv"))
}

pub fn write_timing(rows: &[TimingRow], dir: &Path) -> Result<PathBuf> {
    let mut w = open(dir, "timing.csv")?;
    for r in rows {
        w.serialize(TimingCsvRow {
            method: r.method,
            window_start: r.window_start,
            window_end: r.window_end,
            median_seconds_per_slot: r.median_seconds_per_slot,
        })?;
    }
    finish(w)?;
    Ok(dir.join("timing.csv"))
}
