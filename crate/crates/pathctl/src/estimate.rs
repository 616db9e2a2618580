//! The `estimate` verb: each requested method once per repetition.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Method, Mode};
use crate::error::CliError;
use crate::plan::{acceptance, task_stream, Model, Plan};
use crate::records::{EstimateRecord, Provenance, TimingRecord};
use crate::Outcome;

pub fn run_estimate(cfg: &ExperimentConfig) -> Result<Outcome<EstimateRecord>, CliError> {
    cfg.check(Mode::Estimate)?;
    let prov = Provenance { seed: cfg.seed()?, config_hash: cfg.hash() };
    let model = Model::build(&cfg.problem)?;
    let est = &cfg.estimator;
    let horizon = cfg.problem.horizon();
    let mut methods = est.methods.clone();
    methods.sort();
    methods.dedup();
    let plans = methods
        .iter()
        .map(|&m| Plan::resolve(m, est, None, horizon).map(|p| (m, p)))
        .collect::<Result<Vec<_>, _>>()?;

    let tasks: Vec<(Method, &Plan, usize)> = plans
        .iter()
        .flat_map(|(m, p)| (0..est.repetitions).map(move |rep| (*m, p, rep)))
        .collect();
    let results: Vec<(EstimateRecord, TimingRecord)> = tasks
        .par_iter()
        .map(|&(method, plan, rep)| {
            let start = Instant::now();
            let out = plan.run(model.problem(), &task_stream(prov.seed, method, 0, rep));
            let timing = TimingRecord {
                task: format!("{}/{rep}", method.name()),
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            (record(cfg, &prov, method, plan, rep, out), timing)
        })
        .collect();

    let failures = results.iter().filter(|(r, _)| r.status != "ok").count();
    let (mut rows, timing): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    rows.sort_by(|a, b| (a.method, a.repetition).cmp(&(b.method, b.repetition)));
    Ok(Outcome { rows, timing, failures })
}

fn record(
    cfg: &ExperimentConfig,
    prov: &Provenance,
    method: Method,
    plan: &Plan,
    repetition: usize,
    out: pathctl_core::Result<pathctl_core::estimate::ControlEstimate>,
) -> EstimateRecord {
    let est = &cfg.estimator;
    let grid = pathctl_core::LevelGrid::new(plan.finest(), est.trunc, cfg.problem.horizon()).expect("plan grid");
    let mut row = EstimateRecord {
        method: method.name(),
        epsilon: est.epsilon,
        repetition,
        problem: cfg.problem.name(),
        trunc: est.trunc,
        window: grid.window(),
        base_level: if method == Method::Mlmc { est.trunc } else { plan.finest() },
        finest_level: plan.finest(),
        n_particles: if method == Method::Mc { 0 } else { est.n_particles },
        value: None,
        std_error: None,
        cost: plan.cost(),
        acceptance: None,
        seed: prov.seed,
        config_hash: prov.config_hash.clone(),
        status: "ok",
        error: String::new(),
    };
    match out {
        Ok(e) => {
            row.value = Some(e.value[0]);
            row.std_error = Some(e.std_error[0]);
            row.cost = e.cost;
            row.acceptance = (method != Method::Mc).then(|| acceptance(&e));
        }
        Err(e) => {
            row.status = "error";
            row.error = e.to_string();
        }
    }
    row
}
