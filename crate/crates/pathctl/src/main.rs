use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pathctl::records::{emit, emit_timing};
use pathctl::{demo, estimate, sweep, validate, with_pool, CliError, ExperimentConfig, Method, Mode, Outcome, OutputFormat};

/// Multilevel path-integral control estimation experiments.
#[derive(Parser)]
#[command(name = "pathctl", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Estimate the time-0 control with each requested method.
    Estimate(Common),
    /// MSE against cost over a grid of accuracy targets.
    MseCost(Common),
    /// Structural checks; exits with 1 if any check fails.
    Validate(Common),
    /// Receding-horizon controlled SIVR trajectory.
    SivrDemo(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "PATHCTL_SEED")]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, env = "PATHCTL_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (0 for one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Replaces `estimator.methods`; repeat for several.
    #[arg(long, value_enum)]
    method: Vec<Method>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if !self.method.is_empty() {
            cfg.estimator.methods = self.method.clone();
        }
        Ok(cfg)
    }
}

fn finish<T: Serialize>(
    outcome: Outcome<T>,
    cfg: &ExperimentConfig,
    format: OutputFormat,
    failure: fn(String) -> CliError,
) -> Result<(), CliError> {
    let out = cfg.out.as_deref();
    emit(&outcome.rows, format, out)?;
    emit_timing(&outcome.timing, out)?;
    if outcome.failures > 0 {
        return Err(failure(format!("{} of {} rows failed", outcome.failures, outcome.rows.len())));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (mode, args) = match &cli.verb {
        Verb::Estimate(a) => (Mode::Estimate, a),
        Verb::MseCost(a) => (Mode::MseCost, a),
        Verb::Validate(a) => (Mode::Validate, a),
        Verb::SivrDemo(a) => (Mode::SivrDemo, a),
    };
    let cfg = args.config()?;
    cfg.check(mode)?;
    cfg.seed()?;
    let format = args.format;
    with_pool(args.threads, || match mode {
        Mode::Estimate => finish(estimate::run_estimate(&cfg)?, &cfg, format, CliError::Runtime),
        Mode::MseCost => finish(sweep::run_mse_cost(&cfg)?, &cfg, format, CliError::Runtime),
        Mode::Validate => finish(validate::run_validate(&cfg)?, &cfg, format, CliError::Validation),
        Mode::SivrDemo => finish(demo::run_sivr_demo(&cfg)?, &cfg, format, CliError::Runtime),
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
