//! Resolved problems and estimator plans.

use pathctl_core::estimate::{
    level_schedule, mc_accumulate, mc_finish, multilevel_component, pimh_single_level, ControlEstimate,
    LevelSchedule, McAccumulator, MultilevelConfig,
};
use pathctl_core::pimh::{BurnIn, PimhConfig};
use pathctl_core::{ControlProblem, LevelGrid, Lqg, Purpose, Sivr, Stream, StreamKey};
use rayon::prelude::*;

use crate::config::{EstimatorConfig, Method, ProblemConfig};
use crate::error::CliError;

/// Paths per parallel task in plain Monte Carlo.
const MC_CHUNK: u64 = 4096;

pub enum Model {
    Lqg(Lqg),
    Sivr(Sivr),
}

impl Model {
    /// Builds the configured problem; invalid parameters are config errors.
    pub fn build(cfg: &ProblemConfig) -> Result<Self, CliError> {
        let wrap = |e: pathctl_core::Error| CliError::Config(format!("problem ({}): {e}", cfg.name()));
        match cfg {
            ProblemConfig::Lqg(o) => Lqg::new(o.params()).map(Model::Lqg).map_err(wrap),
            ProblemConfig::Sivr(o) => Sivr::new(o.params()).map(Model::Sivr).map_err(wrap),
        }
    }

    pub fn problem(&self) -> &dyn ControlProblem {
        match self {
            Model::Lqg(p) => p,
            Model::Sivr(p) => p,
        }
    }
}

/// Stream for one (method, epsilon index, repetition) task.
pub fn task_stream(seed: u64, method: Method, point: usize, repetition: usize) -> Stream {
    StreamKey::new(seed, Purpose::Repetition)
        .level(point as u32)
        .replicate(repetition as u64)
        .stream()
        .derive(method as u64)
}

/// One estimator with all sizes fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Mc { grid: LevelGrid, paths: usize },
    Pimh { grid: LevelGrid, chain: PimhConfig },
    Mlmc { schedule: LevelSchedule, config: MultilevelConfig },
}

fn scaled_count(factor: f64, n: usize) -> usize {
    ((factor * n as f64).ceil() as usize).max(1)
}

impl Plan {
    /// With `epsilon` the level schedule fixes `L` and the sample counts;
    /// plain MC and single-level PIMH then run at `L` with `mc_factor N_M`
    /// paths and `single_factor N_M` retained states.
    pub fn resolve(
        method: Method,
        est: &EstimatorConfig,
        epsilon: Option<f64>,
        horizon: f64,
    ) -> Result<Self, CliError> {
        let cfg_err = |e: pathctl_core::Error| CliError::Config(format!("estimator: {e}"));
        let schedule = match (epsilon.or(est.epsilon), &est.samples, est.finest) {
            (Some(eps), _, _) => Some(level_schedule(eps, est.trunc, horizon, est.c_bias, est.c_var).map_err(cfg_err)?),
            (None, Some(samples), Some(finest)) => {
                Some(LevelSchedule::fixed(est.trunc, finest, horizon, samples.clone()).map_err(cfg_err)?)
            }
            _ => None,
        };
        let finest = schedule
            .as_ref()
            .map(|s| s.finest)
            .or(est.finest)
            .ok_or_else(|| CliError::Config("estimator.finest: give `finest` or `epsilon`".into()))?;
        let grid = LevelGrid::new(finest, est.trunc, horizon).map_err(cfg_err)?;
        let burn_in: BurnIn = est.burn_in.into();
        Ok(match method {
            Method::Mc => Plan::Mc {
                grid,
                paths: schedule.as_ref().map_or(est.mc_samples, |s| scaled_count(est.mc_factor, s.samples[0])),
            },
            Method::Pimh => {
                let retained = schedule.as_ref().map_or(est.iterations, |s| scaled_count(est.single_factor, s.samples[0]));
                Plan::Pimh {
                    grid,
                    chain: PimhConfig::retaining(est.n_particles, retained, burn_in).with_scheme(est.resample.into()),
                }
            }
            Method::Mlmc => {
                let schedule = schedule
                    .ok_or_else(|| CliError::Config("estimator.samples: mlmc needs `samples` or `epsilon`".into()))?;
                let mut config = MultilevelConfig::new(est.n_particles, burn_in);
                config.scheme = est.resample.into();
                Plan::Mlmc { schedule, config }
            }
        })
    }

    pub fn finest(&self) -> u32 {
        match self {
            Plan::Mc { grid, .. } | Plan::Pimh { grid, .. } => grid.level(),
            Plan::Mlmc { schedule, .. } => schedule.finest,
        }
    }

    /// Euler steps the run will spend.
    pub fn cost(&self) -> u64 {
        match self {
            Plan::Mc { grid, paths } => *paths as u64 * grid.steps() as u64,
            Plan::Pimh { grid, chain } => {
                (chain.n_iters as u64 + 1) * chain.n_particles as u64 * grid.steps() as u64
            }
            Plan::Mlmc { schedule, config } => schedule.cost(config.n_particles, config.burn_in),
        }
    }

    /// Runs the estimator. Monte Carlo chunks and multilevel terms run in
    /// parallel; each has its own stream so the result does not depend on
    /// the schedule.
    pub fn run(&self, problem: &dyn ControlProblem, stream: &Stream) -> pathctl_core::Result<ControlEstimate> {
        match self {
            Plan::Mc { grid, paths } => {
                let n = *paths as u64;
                let chunks: Vec<u64> = (0..n.div_ceil(MC_CHUNK)).collect();
                let parts = chunks
                    .par_iter()
                    .map(|&c| {
                        let mut acc = McAccumulator::new(problem.control_dim());
                        let first = c * MC_CHUNK;
                        mc_accumulate(problem, *grid, first, MC_CHUNK.min(n - first), stream, &mut acc)?;
                        Ok(acc)
                    })
                    .collect::<pathctl_core::Result<Vec<_>>>()?;
                let mut total = McAccumulator::new(problem.control_dim());
                for p in &parts {
                    total.merge(p);
                }
                mc_finish(*grid, &total)
            }
            Plan::Pimh { grid, chain } => pimh_single_level(problem, *grid, chain, stream),
            Plan::Mlmc { schedule, config } => {
                let levels: Vec<u32> = schedule.levels().collect();
                let components = levels
                    .par_iter()
                    .map(|&l| multilevel_component(problem, schedule, config, l, stream))
                    .collect::<pathctl_core::Result<Vec<_>>>()?;
                let window = schedule.grid(schedule.trunc)?.window();
                ControlEstimate::combine(schedule.trunc, window, components)
            }
        }
    }
}

/// Mean PIMH acceptance over the chain components, weighted by iterations.
pub fn acceptance(est: &ControlEstimate) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for c in &est.components {
        let w = c.iterations.max(1) as f64;
        num += w * c.acceptance_rate;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}
