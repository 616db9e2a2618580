//! Output rows and writers.
//!
//! Every row carries the seed and the configuration hash so it can be re-run.
//! Wall-clock times go to a separate `<out>.timing.csv` so the main output is
//! byte-identical across runs with the same config and seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

/// Seed and config hash shared by all rows of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

/// `estimate` row: one per method and repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub method: &'static str,
    pub epsilon: Option<f64>,
    pub repetition: usize,
    pub problem: &'static str,
    pub trunc: u32,
    /// Truncation time `r`.
    pub window: f64,
    pub base_level: u32,
    pub finest_level: u32,
    pub n_particles: usize,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    /// Euler steps of one particle.
    pub cost: u64,
    pub acceptance: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub status: &'static str,
    pub error: String,
}

/// `mse-cost` row. `kind` is `repetition` or `slope`; the per-point MSE and
/// mean cost are repeated on every repetition row of the point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub kind: &'static str,
    pub method: &'static str,
    pub epsilon: Option<f64>,
    pub repetition: Option<usize>,
    pub problem: &'static str,
    pub trunc: u32,
    pub window: f64,
    pub finest_level: Option<u32>,
    pub n_particles: usize,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub ground_truth: f64,
    pub sq_error: Option<f64>,
    pub cost: Option<u64>,
    pub acceptance: Option<f64>,
    pub point_mse: Option<f64>,
    pub point_mean_cost: Option<f64>,
    /// Fitted `d log(cost) / d log(MSE)`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub status: &'static str,
    pub error: String,
}

/// `validate` row: one per check (and level where relevant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: &'static str,
    pub problem: &'static str,
    pub level: Option<u32>,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: bool,
    pub detail: String,
    pub seed: u64,
    pub config_hash: String,
}

/// `sivr-demo` row: the state at time `t` and the control in force on
/// `[t, t + h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Empty on the final row.
    pub u: Option<f64>,
    pub u_std_error: Option<f64>,
    pub simplex_error: f64,
    pub seed: u64,
    pub config_hash: String,
    pub status: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub task: String,
    pub wall_seconds: f64,
}

/// Serializes `rows` as CSV with a header, or one JSON object per line.
pub fn render<T: Serialize>(rows: &[T], format: OutputFormat) -> Result<Vec<u8>, CliError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
            }
            w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
        }
        OutputFormat::Jsonl => {
            let mut buf = Vec::new();
            for row in rows {
                serde_json::to_writer(&mut buf, row).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
                buf.push(b'\n');
            }
            Ok(buf)
        }
    }
}

/// Writes to `out`, or stdout when no path is given.
pub fn emit<T: Serialize>(rows: &[T], format: OutputFormat, out: Option<&Path>) -> Result<(), CliError> {
    let bytes = render(rows, format)?;
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

pub fn timing_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".timing.csv");
    PathBuf::from(name)
}

/// Writes the timing sidecar next to `out`; nothing when writing to stdout.
pub fn emit_timing(rows: &[TimingRecord], out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        std::fs::write(timing_path(path), render(rows, OutputFormat::Csv)?)?;
    }
    Ok(())
}
