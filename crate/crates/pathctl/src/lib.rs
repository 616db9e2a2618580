//! Experiment driver for the path-integral control estimators: configuration,
//! the `estimate`, `mse-cost`, `validate` and `sivr-demo` runs, and tidy
//! CSV / JSON-lines output.

pub mod config;
pub mod demo;
pub mod error;
pub mod estimate;
pub mod plan;
pub mod records;
pub mod sweep;
pub mod validate;

pub use config::{ExperimentConfig, Method, Mode};
pub use error::CliError;
pub use records::OutputFormat;

/// Runs `f` on a pool of `threads` workers (`0` picks the rayon default).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Rows of a run, wall times for the sidecar and the number of rows whose
/// estimator failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub rows: Vec<T>,
    pub timing: Vec<records::TimingRecord>,
    pub failures: usize,
}
