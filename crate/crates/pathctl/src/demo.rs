//! The `sivr-demo` verb: a receding-horizon controlled SIVR trajectory.
//!
//! At each of `coarse_steps` equally spaced times `t_j` the time-0 control of
//! the problem restarted from the current state with horizon `T - t_j` is
//! estimated by single-level PIMH and held fixed for the next `substeps`
//! controlled Euler steps.

use std::time::Instant;

use pathctl_core::estimate::pimh_single_level;
use pathctl_core::pimh::PimhConfig;
use pathctl_core::{LevelGrid, Purpose, Sivr, StreamKey};

use crate::config::{ExperimentConfig, Mode, ProblemConfig};
use crate::error::CliError;
use crate::records::{Provenance, TimingRecord, TrajectoryRecord};
use crate::validate::SIMPLEX_TOL;
use crate::Outcome;

/// Estimated control and its standard error at state `x` with `remaining`
/// time to go.
fn estimate_control(
    cfg: &ExperimentConfig,
    base: &Sivr,
    x: [f64; 4],
    remaining: f64,
    j: usize,
    seed: u64,
) -> pathctl_core::Result<(f64, f64)> {
    let d = &cfg.demo;
    let problem = base.restarted(x, remaining)?;
    let grid = LevelGrid::new(d.level, d.trunc, remaining)?;
    let chain = PimhConfig::retaining(d.n_particles, d.iterations, cfg.estimator.burn_in.into())
        .with_scheme(cfg.estimator.resample.into());
    let stream = StreamKey::new(seed, Purpose::Chain).replicate(j as u64).stream();
    let est = pimh_single_level(&problem, grid, &chain, &stream)?;
    Ok((est.value[0], est.std_error[0]))
}

pub fn run_sivr_demo(cfg: &ExperimentConfig) -> Result<Outcome<TrajectoryRecord>, CliError> {
    cfg.check(Mode::SivrDemo)?;
    let prov = Provenance { seed: cfg.seed()?, config_hash: cfg.hash() };
    let ProblemConfig::Sivr(o) = &cfg.problem else {
        return Err(CliError::Config("problem.name: sivr-demo needs the sivr problem".into()));
    };
    let params = o.params();
    let model = Sivr::new(params).map_err(|e| CliError::Config(format!("problem (sivr): {e}")))?;
    let d = &cfg.demo;
    let horizon = params.horizon;
    let steps = d.coarse_steps * d.substeps;
    let h = horizon / steps as f64;
    let sqrt_h = h.sqrt();
    let mut noise = StreamKey::new(prov.seed, Purpose::Demo).stream();

    let mut rows = Vec::with_capacity(steps + 1);
    let mut timing = Vec::new();
    let mut failures = 0;
    let mut x = params.x0;
    let mut next = [0.0; 4];
    for j in 0..d.coarse_steps {
        let t_j = horizon * j as f64 / d.coarse_steps as f64;
        let start = Instant::now();
        let (u, se, error) = if d.force_zero_control {
            (0.0, None, String::new())
        } else {
            match estimate_control(cfg, &model, x, horizon - t_j, j, prov.seed) {
                Ok((u, se)) => (u, Some(se), String::new()),
                Err(e) => {
                    failures += 1;
                    (0.0, None, e.to_string())
                }
            }
        };
        timing.push(TimingRecord { task: format!("control/{j}"), wall_seconds: start.elapsed().as_secs_f64() });
        for k in 0..d.substeps {
            let step = j * d.substeps + k;
            rows.push(row(&prov, step, step as f64 * h, x, Some(u), se, &error)?);
            model.controlled_step(&x, u, sqrt_h * noise.normal(), h, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Runtime(format!("state became non-finite at step {}", step + 1)));
            }
            x = next;
        }
    }
    rows.push(row(&prov, steps, horizon, x, None, None, "")?);
    Ok(Outcome { rows, timing, failures })
}

fn row(
    prov: &Provenance,
    step: usize,
    t: f64,
    x: [f64; 4],
    u: Option<f64>,
    u_std_error: Option<f64>,
    error: &str,
) -> Result<TrajectoryRecord, CliError> {
    let simplex_error = (x.iter().sum::<f64>() - 1.0).abs();
    if simplex_error > SIMPLEX_TOL {
        return Err(CliError::Runtime(format!("simplex sum off by {simplex_error:e} at step {step}")));
    }
    Ok(TrajectoryRecord {
        step,
        t,
        s: x[0],
        i: x[1],
        v: x[2],
        r: x[3],
        u,
        u_std_error,
        simplex_error,
        seed: prov.seed,
        config_hash: prov.config_hash.clone(),
        status: if error.is_empty() { "ok" } else { "error" },
        error: error.to_string(),
    })
}
