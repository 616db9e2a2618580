//! The `mse-cost` verb: repeated runs per accuracy target, squared errors
//! against a ground truth, and a log-log fit of cost against MSE.

use std::time::Instant;

use pathctl_core::estimate::pimh_single_level;
use pathctl_core::model::lqg_discrete_control;
use pathctl_core::pimh::{BurnIn, PimhConfig};
use pathctl_core::{stats, LevelGrid, Purpose, StreamKey};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GroundTruth, Method, Mode, ProblemConfig};
use crate::error::CliError;
use crate::plan::{acceptance, task_stream, Model, Plan};
use crate::records::{Provenance, SweepRecord, TimingRecord};
use crate::Outcome;

/// Achieved accuracy and spend of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub epsilon: f64,
    pub mse: f64,
    pub mean_cost: f64,
}

/// Largest `retained` with `retained + burn_in(retained) <= total`.
fn retained_within(total: usize, rule: BurnIn) -> usize {
    let (mut lo, mut hi) = (1usize, total.max(1));
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if mid + rule.for_retained(mid) <= total {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

pub fn ground_truth(cfg: &ExperimentConfig, model: &Model, level: u32, budget: u64) -> Result<f64, CliError> {
    let est = &cfg.estimator;
    match (cfg.sweep.ground_truth, &cfg.problem) {
        (GroundTruth::Exact, ProblemConfig::Lqg(o)) => Ok(lqg_discrete_control(&o.params(), level, est.trunc)?),
        (GroundTruth::Exact, _) => Err(CliError::Config("sweep.ground_truth: `exact` is only available for lqg".into())),
        (GroundTruth::Pimh, _) => {
            let grid = LevelGrid::new(level, est.trunc, cfg.problem.horizon())?;
            let per_run = est.n_particles as u64 * grid.steps() as u64;
            let runs = (budget / per_run).saturating_sub(1) as usize;
            let rule: BurnIn = est.burn_in.into();
            let chain = PimhConfig::retaining(est.n_particles, retained_within(runs, rule), rule)
                .with_scheme(est.resample.into());
            let seed = cfg.seed()?;
            let stream = StreamKey::new(seed, Purpose::GroundTruth).level(level).stream();
            Ok(pimh_single_level(model.problem(), grid, &chain, &stream)?.value[0])
        }
    }
}

pub fn run_mse_cost(cfg: &ExperimentConfig) -> Result<Outcome<SweepRecord>, CliError> {
    cfg.check(Mode::MseCost)?;
    let prov = Provenance { seed: cfg.seed()?, config_hash: cfg.hash() };
    let model = Model::build(&cfg.problem)?;
    let est = &cfg.estimator;
    let horizon = cfg.problem.horizon();

    let mut methods = est.methods.clone();
    methods.sort();
    methods.dedup();
    let mut epsilons = cfg.sweep.epsilons.clone();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();

    let mut plans = Vec::new();
    for &m in &methods {
        for (point, &eps) in epsilons.iter().enumerate() {
            plans.push((m, point, eps, Plan::resolve(m, est, Some(eps), horizon)?));
        }
    }
    let top_level = plans.iter().map(|p| p.3.finest()).max().expect("at least one point") + 1;
    let budget = (cfg.sweep.ground_truth_factor * plans.iter().map(|p| p.3.cost()).max().unwrap_or(0) as f64) as u64;

    let reps = cfg.sweep.repetitions;
    let tasks: Vec<(usize, usize)> = (0..plans.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let (truth, results) = rayon::join(
        || {
            let start = Instant::now();
            ground_truth(cfg, &model, top_level, budget).map(|v| (v, start.elapsed().as_secs_f64()))
        },
        || {
            tasks
                .par_iter()
                .map(|&(i, rep)| {
                    let (m, point, _, plan) = &plans[i];
                    let start = Instant::now();
                    let out = plan.run(model.problem(), &task_stream(prov.seed, *m, *point, rep));
                    (out, start.elapsed().as_secs_f64())
                })
                .collect::<Vec<_>>()
        },
    );
    let (truth, truth_secs) = truth?;

    let mut timing = vec![TimingRecord { task: format!("ground_truth/L{top_level}"), wall_seconds: truth_secs }];
    let mut rows = Vec::new();
    let mut failures = 0;
    let window = LevelGrid::new(est.trunc, est.trunc, horizon)?.window();
    let base = |method: Method| SweepRecord {
        kind: "repetition",
        method: method.name(),
        epsilon: None,
        repetition: None,
        problem: cfg.problem.name(),
        trunc: est.trunc,
        window,
        finest_level: None,
        n_particles: if method == Method::Mc { 0 } else { est.n_particles },
        value: None,
        std_error: None,
        ground_truth: truth,
        sq_error: None,
        cost: None,
        acceptance: None,
        point_mse: None,
        point_mean_cost: None,
        slope: None,
        intercept: None,
        seed: prov.seed,
        config_hash: prov.config_hash.clone(),
        status: "ok",
        error: String::new(),
    };

    for &method in &methods {
        let mut summaries = Vec::new();
        for (i, (m, _, eps, plan)) in plans.iter().enumerate() {
            if *m != method {
                continue;
            }
            let mut point_rows = Vec::new();
            for rep in 0..reps {
                let (out, secs) = &results[i * reps + rep];
                timing.push(TimingRecord { task: format!("{}/{eps}/{rep}", method.name()), wall_seconds: *secs });
                let mut row = SweepRecord {
                    epsilon: Some(*eps),
                    repetition: Some(rep),
                    finest_level: Some(plan.finest()),
                    cost: Some(plan.cost()),
                    ..base(method)
                };
                match out {
                    Ok(e) => {
                        row.value = Some(e.value[0]);
                        row.std_error = Some(e.std_error[0]);
                        row.sq_error = Some((e.value[0] - truth).powi(2));
                        row.cost = Some(e.cost);
                        row.acceptance = (method != Method::Mc).then(|| acceptance(e));
                    }
                    Err(e) => {
                        failures += 1;
                        row.status = "error";
                        row.error = e.to_string();
                    }
                }
                point_rows.push(row);
            }
            let ok: Vec<&SweepRecord> = point_rows.iter().filter(|r| r.status == "ok").collect();
            if !ok.is_empty() {
                let mse = ok.iter().map(|r| r.sq_error.unwrap()).sum::<f64>() / ok.len() as f64;
                let mean_cost = ok.iter().map(|r| r.cost.unwrap() as f64).sum::<f64>() / ok.len() as f64;
                for r in &mut point_rows {
                    r.point_mse = Some(mse);
                    r.point_mean_cost = Some(mean_cost);
                }
                summaries.push(PointSummary { epsilon: *eps, mse, mean_cost });
            }
            rows.extend(point_rows);
        }
        let mut slope_row = SweepRecord { kind: "slope", ..base(method) };
        match fit_cost_against_mse(&summaries) {
            Some((slope, intercept)) => {
                slope_row.slope = Some(slope);
                slope_row.intercept = Some(intercept);
            }
            None => {
                slope_row.status = "error";
                slope_row.error = "fewer than two points with positive MSE".into();
            }
        }
        rows.push(slope_row);
    }
    Ok(Outcome { rows, timing, failures })
}

/// Least-squares `(slope, intercept)` of `ln cost` on `ln MSE`.
pub fn fit_cost_against_mse(points: &[PointSummary]) -> Option<(f64, f64)> {
    let usable: Vec<&PointSummary> = points.iter().filter(|p| p.mse > 0.0 && p.mean_cost > 0.0).collect();
    if usable.len() < 2 {
        return None;
    }
    let x: Vec<f64> = usable.iter().map(|p| p.mse.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.mean_cost.ln()).collect();
    Some(stats::linear_fit(&x, &y))
}

/// Cost the method behind `points` would need to reach `mse`: piecewise
/// log-log interpolation between its points, extended with the fitted slope
/// beyond them.
pub fn cost_at_mse(points: &[PointSummary], mse: f64) -> Option<f64> {
    let (slope, _) = fit_cost_against_mse(points)?;
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mse > 0.0 && p.mean_cost > 0.0)
        .map(|p| (p.mse.ln(), p.mean_cost.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x = mse.ln();
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let y = if x <= first.0 {
        first.1 + slope * (x - first.0)
    } else if x >= last.0 {
        last.1 + slope * (x - last.0)
    } else {
        let k = pts.windows(2).position(|w| x <= w[1].0).expect("inside the range");
        let (a, b) = (pts[k], pts[k + 1]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    };
    Some(y.exp())
}

/// Per-point summaries of one method, read back from sweep rows.
pub fn summaries(rows: &[SweepRecord], method: Method) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = Vec::new();
    for r in rows.iter().filter(|r| r.kind == "repetition" && r.method == method.name()) {
        if let (Some(epsilon), Some(mse), Some(mean_cost)) = (r.epsilon, r.point_mse, r.point_mean_cost) {
            if out.last().map_or(true, |p| p.epsilon != epsilon) {
                out.push(PointSummary { epsilon, mse, mean_cost });
            }
        }
    }
    out
}
