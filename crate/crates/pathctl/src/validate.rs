//! The `validate` verb: structural checks on the configured problem.

use pathctl_core::model::{
    assumption_residual, left_inverse_residual, resolve_gamma, riccati_gain, riccati_gain_adaptive, simplex_probes,
    RiccatiConvention,
};
use pathctl_core::simulate::{coarsen_increments, simulate_coupled, simulate_path, CoupledPath, DiscretePath};
use pathctl_core::smc::{run_coupled_smc_with, run_smc_with};
use pathctl_core::ssm::rn_weights;
use pathctl_core::{
    stats, ControlProblem, CustomProblem, LevelGrid, Lqg, Purpose, Sivr, Stream, StreamKey,
};

use crate::config::{ExperimentConfig, Mode, ProblemConfig};
use crate::error::CliError;
use crate::records::{CheckRecord, Provenance};
use crate::Outcome;

pub const GAMMA_TOL: f64 = 1e-8;
pub const REPLAY_TOL: f64 = 1e-12;
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;
pub const RICCATI_TOL: f64 = 1e-8;
pub const SIMPLEX_TOL: f64 = 1e-10;
/// Largest allowed growth per level of the maximum RN weight.
pub const RN_TREND_TOL: f64 = 0.01;

struct Checks<'a> {
    prov: &'a Provenance,
    problem: &'static str,
    rows: Vec<CheckRecord>,
}

impl Checks<'_> {
    fn push(
        &mut self,
        check: &'static str,
        level: Option<u32>,
        statistic: Option<f64>,
        threshold: Option<f64>,
        pass: bool,
        detail: impl Into<String>,
    ) {
        self.rows.push(CheckRecord {
            check,
            problem: self.problem,
            level,
            statistic,
            threshold,
            pass,
            detail: detail.into(),
            seed: self.prov.seed,
            config_hash: self.prov.config_hash.clone(),
        });
    }

    fn fail(&mut self, check: &'static str, level: Option<u32>, detail: impl Into<String>) {
        self.push(check, level, None, None, false, detail);
    }
}

/// Coupled path whose coarse increments pair fine increments `(2k, 2k + 1)`
/// instead of `(2k - 1, 2k)`; the negative control for the exactness check.
pub fn tampered_coupling(
    problem: &dyn ControlProblem,
    fine_grid: LevelGrid,
    stream: &mut Stream,
) -> pathctl_core::Result<CoupledPath> {
    let fine = simulate_path(problem, fine_grid, stream)?;
    let d = problem.noise_dim();
    let mut shifted = fine.increments().to_vec();
    shifted.rotate_left(d);
    let coarse = DiscretePath::from_increments(problem, fine_grid.coarser()?, coarsen_increments(&shifted, d))?;
    Ok(CoupledPath { fine, coarse })
}

fn coupled(
    problem: &dyn ControlProblem,
    fine_grid: LevelGrid,
    stream: &mut Stream,
    tamper: bool,
) -> pathctl_core::Result<CoupledPath> {
    if tamper {
        tampered_coupling(problem, fine_grid, stream)
    } else {
        simulate_coupled(problem, fine_grid, stream)
    }
}

fn path_stream(seed: u64, level: u32, i: usize) -> Stream {
    StreamKey::new(seed, Purpose::Validation).level(level).replicate(i as u64).stream()
}

/// Exact coupled constant for `l = c`, `phi = 0`: odd steps give
/// `1 + e^{-x}`, even interior steps `e^{-x}`, the terminal step 1, with
/// `x = h c / gamma`.
pub fn constant_cost_coupled_log_c(level: u32, c: f64, horizon: f64, gamma: f64) -> f64 {
    let half = (1u64 << (level - 1)) as f64;
    let x = horizon / (1u64 << level) as f64 * c / gamma;
    half * (-x).exp().ln_1p() - x * (half - 1.0)
}

pub fn run_validate(cfg: &ExperimentConfig) -> Result<Outcome<CheckRecord>, CliError> {
    cfg.check(Mode::Validate)?;
    let prov = Provenance { seed: cfg.seed()?, config_hash: cfg.hash() };
    let trunc = cfg.estimator.trunc;
    let paths = cfg.validate.paths;
    let mut c = Checks { prov: &prov, problem: cfg.problem.name(), rows: Vec::new() };
    let config_err = |e: pathctl_core::Error| CliError::Config(format!("problem ({}): {e}", cfg.problem.name()));

    // raw problem for the dynamics, resolved problem for anything needing gamma
    let (raw, resolved): (Box<dyn ControlProblem>, Option<Box<dyn ControlProblem>>) = match &cfg.problem {
        ProblemConfig::Lqg(o) => {
            let p = Lqg::new(o.params()).map_err(config_err)?;
            let probes = [vec![o.params().x0], vec![1.0], vec![-2.5]];
            match resolve_gamma(&p, &probes) {
                Ok(g) => {
                    let rel = (g - p.gamma()).abs() / p.gamma();
                    c.push("gamma", None, Some(g), Some(GAMMA_TOL), rel <= GAMMA_TOL, format!("resolved gamma vs R / B^2 = {}", p.gamma()));
                }
                Err(e) => c.fail("gamma", None, e.to_string()),
            }
            (Box::new(p.clone()), Some(Box::new(p)))
        }
        ProblemConfig::Sivr(o) => {
            let params = o.params();
            let raw = Sivr::unresolved(params).map_err(config_err)?;
            let resolved = match resolve_gamma(&raw, &simplex_probes(params.x0)) {
                Ok(g) => {
                    let ratio = g / params.r_weight;
                    let want = params.sigma * params.sigma;
                    let ok = ((ratio - want) / want).abs() <= GAMMA_TOL;
                    c.push("gamma", None, Some(g), Some(GAMMA_TOL), ok, format!("gamma / r_weight = {ratio}, sigma^2 = {want}"));
                    match Sivr::new(params) {
                        Ok(s) => Some(Box::new(s) as Box<dyn ControlProblem>),
                        Err(e) => {
                            c.fail("gamma", None, e.to_string());
                            None
                        }
                    }
                }
                Err(e) => {
                    c.fail("gamma", None, e.to_string());
                    None
                }
            };
            (Box::new(raw), resolved)
        }
    };
    let raw = raw.as_ref();
    let horizon = raw.horizon();
    let probes: Vec<Vec<f64>> = match &cfg.problem {
        ProblemConfig::Sivr(o) => simplex_probes(o.params().x0),
        ProblemConfig::Lqg(o) => vec![vec![o.params().x0], vec![1.0], vec![-2.5]],
    };

    match &resolved {
        Some(p) => {
            let mut worst = 0.0f64;
            for x in &probes {
                worst = worst.max(assumption_residual(p.as_ref(), x)?);
            }
            c.push("assumption_residual", None, Some(worst), Some(GAMMA_TOL), worst <= GAMMA_TOL, "max relative residual of gamma e R^-1 e^T = g g^T over probes");
        }
        None => c.fail("assumption_residual", None, "skipped: no consistent gamma"),
    }
    let mut worst = 0.0f64;
    for x in &probes {
        let (e, g) = left_inverse_residual(raw, x);
        worst = worst.max(e).max(g);
    }
    c.push("left_inverse", None, Some(worst), Some(REPLAY_TOL), worst <= REPLAY_TOL, "max residual of e^-1 e - I and g^-1 g - I over probes");

    // coupling exactness and replay on simulated coupled paths
    for level in trunc + 1..=trunc + 3 {
        let grid = LevelGrid::new(level, trunc, horizon).map_err(config_err)?;
        let (mut defect, mut replay, mut errors) = (0.0f64, 0.0f64, 0usize);
        for i in 0..paths {
            match coupled(raw, grid, &mut path_stream(prov.seed, level, i), cfg.validate.tamper_coupling) {
                Ok(pair) => {
                    defect = defect.max(pair.coupling_defect());
                    replay = replay.max(pair.fine.reconstruction_error(raw)).max(pair.coarse.reconstruction_error(raw));
                }
                Err(_) => errors += 1,
            }
        }
        let note = if errors > 0 { format!("; {errors} paths failed to simulate") } else { String::new() };
        c.push("coupling_exactness", Some(level), Some(defect), Some(0.0), defect == 0.0 && errors == 0, format!("max |coarse increment - fine pair sum| over {paths} paths{note}"));
        c.push("replay", Some(level), Some(replay), Some(REPLAY_TOL), replay <= REPLAY_TOL && errors == 0, "max |stored state - Euler replay|");
    }

    // RN weights in (0, 1] with no upward trend in the per-level maxima
    match &resolved {
        Some(p) => {
            let p = p.as_ref();
            let levels: Vec<u32> = (trunc + 1..=trunc + 4).collect();
            let mut maxima = Vec::new();
            for &level in &levels {
                let grid = LevelGrid::new(level, trunc, horizon).map_err(config_err)?;
                let (mut lo, mut hi, mut errors) = (f64::INFINITY, 0.0f64, 0usize);
                for i in 0..paths {
                    let w = simulate_coupled(p, grid, &mut path_stream(prov.seed, level + 100, i))
                        .and_then(|pair| rn_weights(p, &pair));
                    match w {
                        Ok((h1, h2)) => {
                            lo = lo.min(h1).min(h2);
                            hi = hi.max(h1).max(h2);
                        }
                        Err(_) => errors += 1,
                    }
                }
                let ok = lo > 0.0 && hi <= 1.0 && errors == 0;
                c.push("rn_bounds", Some(level), Some(hi), Some(1.0), ok, format!("H1, H2 in [{lo:e}, {hi}] over {paths} paths"));
                maxima.push(hi);
            }
            let x: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
            let (slope, _) = stats::linear_fit(&x, &maxima);
            c.push("rn_trend", None, Some(slope), Some(RN_TREND_TOL), slope <= RN_TREND_TOL, format!("slope of per-level max over levels {}..={}: {maxima:?}", levels[0], levels[3]));
        }
        None => c.fail("rn_bounds", None, "skipped: no consistent gamma"),
    }

    // zero-variance normalizing constants
    let gamma = resolved.as_ref().map_or(1.0, |p| p.gamma());
    for cost in [0.0, 0.7] {
        let flat = CustomProblem::brownian(1, vec![0.0], horizon).with_running_cost(move |_| cost).with_gamma(gamma);
        for level in trunc..=trunc + 3 {
            // the window does not enter C; a low truncation lets level M have a coarse partner
            let grid = LevelGrid::new(level, 2, horizon).map_err(config_err)?;
            let mut s = path_stream(prov.seed, level + 200, 0);
            let single = run_smc_with(&flat, grid, 8, cfg.estimator.resample.into(), &mut s)?.log_normalizing_constant;
            let want = -cost * (horizon - grid.step_size()) / gamma;
            let err_single = ((single - want).exp() - 1.0).abs();
            let pair = run_coupled_smc_with(&flat, grid, 8, cfg.estimator.resample.into(), &mut s)?.log_normalizing_constant;
            let want_pair = constant_cost_coupled_log_c(level, cost, horizon, gamma);
            let err_pair = ((pair - want_pair).exp() - 1.0).abs();
            let err = err_single.max(err_pair);
            c.push("zero_variance_c", Some(level), Some(err), Some(ZERO_VARIANCE_TOL), err < ZERO_VARIANCE_TOL, format!("relative error of C and coupled C with l = {cost}, phi = 0"));
        }
    }

    match &cfg.problem {
        ProblemConfig::Lqg(o) => {
            let params = o.params();
            let fixed = riccati_gain(&params, 0.0, RiccatiConvention::Standard, 20_000);
            let adaptive = riccati_gain_adaptive(&params, 0.0, RiccatiConvention::Standard, 1e-12);
            let gap = (fixed - adaptive).abs();
            let u = -params.b * adaptive * params.x0 / params.r;
            c.push("riccati_agreement", None, Some(gap), Some(RICCATI_TOL), gap <= RICCATI_TOL, format!("RK4 vs adaptive gain; u*(0, x0) = {u}"));
        }
        ProblemConfig::Sivr(_) => {
            let level = trunc + 3;
            let grid = LevelGrid::new(level, trunc, horizon).map_err(config_err)?;
            let (mut worst, mut errors) = (0.0f64, 0usize);
            for i in 0..paths {
                match simulate_path(raw, grid, &mut path_stream(prov.seed, level + 300, i)) {
                    Ok(path) => {
                        for k in 0..=grid.steps() {
                            worst = worst.max((path.state(k).iter().sum::<f64>() - 1.0).abs());
                        }
                    }
                    Err(_) => errors += 1,
                }
            }
            c.push("simplex", Some(level), Some(worst), Some(SIMPLEX_TOL), worst <= SIMPLEX_TOL && errors == 0, format!("max |S + I + V + R - 1| over {paths} paths"));
        }
    }

    let failures = c.rows.iter().filter(|r| !r.pass).count();
    Ok(Outcome { rows: c.rows, timing: Vec::new(), failures })
}
