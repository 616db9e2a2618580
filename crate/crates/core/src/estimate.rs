//! Control estimators: self-normalized plain Monte Carlo, single-level PIMH,
//! the coupled level difference and the multilevel sum, with level
//! schedules and cost accounting.
//!
//! Cost is counted in Euler steps of one particle. A coupled chain pays for
//! the fine and the coarse steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::pimh::{run_chain, BurnIn, ChainStats, PimhConfig};
use crate::rng::Stream;
use crate::simulate::{simulate_path, LevelGrid};
use crate::smc::{run_coupled_smc_with, run_smc_with, ResampleScheme};
use crate::ssm::{log_rn_weights, test_function, PotentialTable};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    MonteCarlo,
    SingleLevel,
    Difference,
}

/// One term of an estimate: a single-level value or a level difference.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelComponent {
    pub kind: ComponentKind,
    pub level: u32,
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Sample variance of the per-state summand, per control component.
    pub term_variance: Vec<f64>,
    /// Retained chain states, or paths for plain Monte Carlo.
    pub samples: usize,
    /// Chain iterations including burn-in. Zero for plain Monte Carlo.
    pub iterations: usize,
    pub cost: u64,
    /// PIMH acceptance rate. One for plain Monte Carlo.
    pub acceptance_rate: f64,
    /// Kish effective sample size for plain Monte Carlo; retained samples
    /// divided by the batch-means inflation for chains.
    pub effective_samples: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub trunc: u32,
    /// Truncation time `r`.
    pub window: f64,
    pub base_level: u32,
    pub finest_level: u32,
    pub cost: u64,
    pub components: Vec<LevelComponent>,
}

impl ControlEstimate {
    /// Sums independent components.
    pub fn combine(trunc: u32, window: f64, components: Vec<LevelComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("components", "at least one is required"))?;
        let m = first.value.len();
        let mut value = vec![0.0; m];
        let mut var = vec![0.0; m];
        let mut cost = 0u64;
        for c in &components {
            for j in 0..m {
                value[j] += c.value[j];
                var[j] += c.std_error[j] * c.std_error[j];
            }
            cost += c.cost;
        }
        Ok(Self {
            value,
            std_error: var.into_iter().map(libm::sqrt).collect(),
            trunc,
            window,
            base_level: components.iter().map(|c| c.level).min().unwrap_or(0),
            finest_level: components.iter().map(|c| c.level).max().unwrap_or(0),
            cost,
            components,
        })
    }
}

/// Euler steps of one single-level chain: every particle filter run costs
/// `N_p 2^l`.
pub fn single_level_cost(level: u32, smc_runs: usize, n_particles: usize) -> u64 {
    smc_runs as u64 * n_particles as u64 * (1u64 << level)
}

/// Euler steps of one coupled chain: `N_p (2^l + 2^{l-1})` per run.
pub fn difference_cost(level: u32, smc_runs: usize, n_particles: usize) -> u64 {
    smc_runs as u64 * n_particles as u64 * ((1u64 << level) + (1u64 << (level - 1)))
}

/// Running sums of self-normalized importance sampling in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct McAccumulator {
    top: f64,
    count: usize,
    sw: f64,
    sw2: f64,
    swx: Vec<f64>,
    sw2x: Vec<f64>,
    sw2x2: Vec<f64>,
}

impl McAccumulator {
    pub fn new(m: usize) -> Self {
        Self {
            top: f64::NEG_INFINITY,
            count: 0,
            sw: 0.0,
            sw2: 0.0,
            swx: vec![0.0; m],
            sw2x: vec![0.0; m],
            sw2x2: vec![0.0; m],
        }
    }

    fn rescale(&mut self, new_top: f64) {
        if self.top == f64::NEG_INFINITY {
            self.top = new_top;
            return;
        }
        let s = libm::exp(self.top - new_top);
        let s2 = s * s;
        self.sw *= s;
        self.sw2 *= s2;
        for j in 0..self.swx.len() {
            self.swx[j] *= s;
            self.sw2x[j] *= s2;
            self.sw2x2[j] *= s2;
        }
        self.top = new_top;
    }

    pub fn push(&mut self, log_w: f64, x: &[f64]) {
        self.count += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.top {
            self.rescale(log_w);
        }
        let w = libm::exp(log_w - self.top);
        self.sw += w;
        self.sw2 += w * w;
        for (j, &xj) in x.iter().enumerate() {
            self.swx[j] += w * xj;
            self.sw2x[j] += w * w * xj;
            self.sw2x2[j] += w * w * xj * xj;
        }
    }

    /// Folds `other` in. Merging in a fixed order keeps results reproducible.
    pub fn merge(&mut self, other: &McAccumulator) {
        self.count += other.count;
        if other.top == f64::NEG_INFINITY {
            return;
        }
        if other.top > self.top {
            self.rescale(other.top);
        }
        let s = libm::exp(other.top - self.top);
        let s2 = s * s;
        self.sw += other.sw * s;
        self.sw2 += other.sw2 * s2;
        for j in 0..self.swx.len() {
            self.swx[j] += other.swx[j] * s;
            self.sw2x[j] += other.sw2x[j] * s2;
            self.sw2x2[j] += other.sw2x2[j] * s2;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(mean, delta-method standard error, effective sample size)`.
    pub fn finish(&self) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if !(self.sw > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let mean: Vec<f64> = self.swx.iter().map(|s| s / self.sw).collect();
        let se = (0..mean.len())
            .map(|j| {
                let u = mean[j];
                let v = (self.sw2x2[j] - 2.0 * u * self.sw2x[j] + u * u * self.sw2) / (self.sw * self.sw);
                libm::sqrt(v.max(0.0))
            })
            .collect();
        Ok((mean, se, self.sw * self.sw / self.sw2))
    }
}

/// Plain Monte Carlo over paths `first..first + count`, where path `i` is
/// simulated from `stream.derive(i)`. Adds `r^{-1} phi_l` with weight
/// `G^l` into `acc`.
pub fn mc_accumulate<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    first: u64,
    count: u64,
    stream: &Stream,
    acc: &mut McAccumulator,
) -> Result<()> {
    let r = grid.window();
    for i in first..first + count {
        let path = simulate_path(problem, grid, &mut stream.derive(i))?;
        let log_w = PotentialTable::new(problem, &path).log_product();
        let x: Vec<f64> = test_function(problem, &path).into_iter().map(|v| v / r).collect();
        acc.push(log_w, &x);
    }
    Ok(())
}

/// Builds the estimate from a filled accumulator.
pub fn mc_finish(grid: LevelGrid, acc: &McAccumulator) -> Result<ControlEstimate> {
    let (value, se, ess) = acc.finish()?;
    let n = acc.count();
    let component = LevelComponent {
        kind: ComponentKind::MonteCarlo,
        level: grid.level(),
        term_variance: se.iter().map(|s| s * s * n as f64).collect(),
        value,
        std_error: se,
        samples: n,
        iterations: 0,
        cost: n as u64 * grid.steps() as u64,
        acceptance_rate: 1.0,
        effective_samples: ess,
    };
    ControlEstimate::combine(grid.trunc(), grid.window(), vec![component])
}

/// Self-normalized importance sampling with `n` independent paths weighted
/// by their potential products.
pub fn mc_single_level<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    n: usize,
    stream: &Stream,
) -> Result<ControlEstimate> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut acc = McAccumulator::new(problem.control_dim());
    mc_accumulate(problem, grid, 0, n as u64, stream, &mut acc)?;
    mc_finish(grid, &acc)
}

fn chain_effective(series_se: f64, series_var: f64, n: usize) -> f64 {
    if series_se > 0.0 {
        (series_var / (series_se * series_se)).min(n as f64)
    } else {
        n as f64
    }
}

/// Per-component mean, batch-means SE and sample variance of a flat
/// `n x m` series.
fn summarize(series: &[f64], m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = series.len() / m;
    let mut mean = vec![0.0; m];
    let mut se = vec![0.0; m];
    let mut var = vec![0.0; m];
    let mut col = vec![0.0; n];
    for j in 0..m {
        for i in 0..n {
            col[i] = series[i * m + j];
        }
        mean[j] = stats::mean(&col);
        se[j] = stats::batch_means_se(&col);
        var[j] = stats::variance(&col);
    }
    (mean, se, var)
}

/// Chain average of `r^{-1} phi_l` over the retained PIMH states.
pub fn pimh_single_level<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<ControlEstimate> {
    let component = single_level_component(problem, grid, config, stream)?;
    ControlEstimate::combine(grid.trunc(), grid.window(), vec![component])
}

pub fn single_level_component<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<LevelComponent> {
    let m = problem.control_dim();
    let r = grid.window();
    let mut propose = |s: &mut Stream| {
        let out = run_smc_with(problem, grid, config.n_particles, config.scheme, s)?;
        let phi: Vec<f64> = test_function(problem, &out.trajectory).into_iter().map(|v| v / r).collect();
        Ok((phi, out.log_normalizing_constant))
    };
    let mut series = Vec::with_capacity(config.n_iters.saturating_sub(config.burn_in) * m);
    let stats = run_chain(&mut propose, config.n_iters, config.burn_in, stream, |phi: &Vec<f64>| {
        series.extend_from_slice(phi)
    })?;
    let (value, se, var) = summarize(&series, m);
    let n = stats.retained();
    Ok(LevelComponent {
        kind: ComponentKind::SingleLevel,
        level: grid.level(),
        effective_samples: chain_effective(se[0], var[0], n),
        value,
        std_error: se,
        term_variance: var,
        samples: n,
        iterations: stats.iterations,
        cost: single_level_cost(grid.level(), stats.smc_runs, config.n_particles),
        acceptance_rate: stats.acceptance_rate(),
    })
}

/// Retained coupled-chain states reduced to what the difference estimator
/// needs: test functions on both levels and the two log RN weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSamples {
    pub m: usize,
    pub fine_phi: Vec<f64>,
    pub coarse_phi: Vec<f64>,
    pub log_h1: Vec<f64>,
    pub log_h2: Vec<f64>,
    pub stats: ChainStats,
}

impl DifferenceSamples {
    pub fn len(&self) -> usize {
        self.log_h1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_h1.is_empty()
    }

    /// `r^{-1}` times the difference of the two self-normalized ratios, and
    /// the linearized per-state terms whose mean is that difference to first
    /// order (flat, `n x m`).
    pub fn difference(&self, window: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.len();
        let m = self.m;
        let w1 = shifted_weights(&self.log_h1)?;
        let w2 = shifted_weights(&self.log_h2)?;
        let (s1, s2): (f64, f64) = (w1.iter().sum(), w2.iter().sum());
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                a[j] += w1[i] * self.fine_phi[i * m + j];
                b[j] += w2[i] * self.coarse_phi[i * m + j];
            }
        }
        a.iter_mut().for_each(|v| *v /= s1);
        b.iter_mut().for_each(|v| *v /= s2);
        let value: Vec<f64> = (0..m).map(|j| (a[j] - b[j]) / window).collect();
        let (mean1, mean2) = (s1 / n as f64, s2 / n as f64);
        let mut terms = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let fine = w1[i] / mean1 * (self.fine_phi[i * m + j] - a[j]);
                let coarse = w2[i] / mean2 * (self.coarse_phi[i * m + j] - b[j]);
                terms[i * m + j] = (fine - coarse) / window + value[j];
            }
        }
        Ok((value, terms))
    }
}

fn shifted_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(log_w.iter().map(|v| libm::exp(v - top)).collect())
}

/// Runs a coupled PIMH chain and keeps the per-state summaries.
pub fn coupled_chain_samples<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<DifferenceSamples> {
    fine_grid.coarser()?;
    let m = problem.control_dim();
    type Summary = (Vec<f64>, Vec<f64>, f64, f64);
    let mut propose = |s: &mut Stream| -> Result<(Summary, f64)> {
        let out = run_coupled_smc_with(problem, fine_grid, config.n_particles, config.scheme, s)?;
        let pair = &out.trajectory;
        let (h1, h2) = log_rn_weights(problem, pair)?;
        let summary = (test_function(problem, &pair.fine), test_function(problem, &pair.coarse), h1, h2);
        Ok((summary, out.log_normalizing_constant))
    };
    let retained = config.n_iters.saturating_sub(config.burn_in);
    let mut fine_phi = Vec::with_capacity(retained * m);
    let mut coarse_phi = Vec::with_capacity(retained * m);
    let mut log_h1 = Vec::with_capacity(retained);
    let mut log_h2 = Vec::with_capacity(retained);
    let stats = run_chain(&mut propose, config.n_iters, config.burn_in, stream, |s: &Summary| {
        fine_phi.extend_from_slice(&s.0);
        coarse_phi.extend_from_slice(&s.1);
        log_h1.push(s.2);
        log_h2.push(s.3);
    })?;
    Ok(DifferenceSamples {
        m,
        fine_phi,
        coarse_phi,
        log_h1,
        log_h2,
        stats,
    })
}

/// Estimate of `u^l - u^{l-1}` from one coupled chain.
pub fn level_difference<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<LevelComponent> {
    let samples = coupled_chain_samples(problem, fine_grid, config, stream)?;
    let (value, terms) = samples.difference(fine_grid.window())?;
    let (_, se, var) = summarize(&terms, samples.m);
    let n = samples.len();
    Ok(LevelComponent {
        kind: ComponentKind::Difference,
        level: fine_grid.level(),
        effective_samples: chain_effective(se[0], var[0], n),
        value,
        std_error: se,
        term_variance: var,
        samples: n,
        iterations: samples.stats.iterations,
        cost: difference_cost(fine_grid.level(), samples.stats.smc_runs, config.n_particles),
        acceptance_rate: samples.stats.acceptance_rate(),
    })
}

/// Finest level and retained chain lengths per level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSchedule {
    pub epsilon: f64,
    pub trunc: u32,
    pub finest: u32,
    pub horizon: f64,
    /// `N_l` for `l = M..=L`.
    pub samples: Vec<usize>,
}

/// `L = max(M, ceil(log2(T c_bias / eps^2)))` so that `h_L <= eps^2 / c_bias`,
/// and `N_l = ceil(c_var eps^{-2} h_l (L - M + 1))`.
pub fn level_schedule(epsilon: f64, trunc: u32, horizon: f64, c_bias: f64, c_var: f64) -> Result<LevelSchedule> {
    for (name, v) in [("epsilon", epsilon), ("c_bias", c_bias), ("c_var", c_var), ("horizon", horizon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    if trunc < 2 {
        return Err(Error::invalid("trunc", "must be at least 2"));
    }
    let raw = libm::log2(horizon * c_bias / (epsilon * epsilon));
    // absorb rounding in exact powers of two
    let finest = (libm::ceil(raw - 1e-9).max(0.0) as u32).max(trunc);
    if finest > 30 {
        return Err(Error::invalid("epsilon", "requires a level above 30"));
    }
    let span = (finest - trunc + 1) as f64;
    let samples = (trunc..=finest)
        .map(|l| {
            let h = libm::ldexp(horizon, -(l as i32));
            libm::ceil(c_var * h * span / (epsilon * epsilon) - 1e-9).max(1.0) as usize
        })
        .collect();
    Ok(LevelSchedule {
        epsilon,
        trunc,
        finest,
        horizon,
        samples,
    })
}

impl LevelSchedule {
    /// A schedule with explicit per-level sample counts.
    pub fn fixed(trunc: u32, finest: u32, horizon: f64, samples: Vec<usize>) -> Result<Self> {
        if finest < trunc || samples.len() != (finest - trunc + 1) as usize {
            return Err(Error::invalid("samples", "need one count per level M..=L"));
        }
        if samples.iter().any(|&n| n == 0) {
            return Err(Error::invalid("samples", "every level needs at least one sample"));
        }
        Ok(Self {
            epsilon: f64::NAN,
            trunc,
            finest,
            horizon,
            samples,
        })
    }

    pub fn levels(&self) -> core::ops::RangeInclusive<u32> {
        self.trunc..=self.finest
    }

    pub fn samples_at(&self, level: u32) -> usize {
        self.samples[(level - self.trunc) as usize]
    }

    pub fn grid(&self, level: u32) -> Result<LevelGrid> {
        LevelGrid::new(level, self.trunc, self.horizon)
    }

    /// Euler steps the schedule will spend: retained samples plus burn-in
    /// plus the initial run, times `N_p` times the steps per run.
    pub fn cost(&self, n_particles: usize, burn_in: BurnIn) -> u64 {
        self.levels()
            .map(|l| {
                let n = self.samples_at(l);
                let runs = n + burn_in.for_retained(n) + 1;
                if l == self.trunc {
                    single_level_cost(l, runs, n_particles)
                } else {
                    difference_cost(l, runs, n_particles)
                }
            })
            .sum()
    }

    /// The same levels with every `N_l` multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            samples: self.samples.iter().map(|n| n * factor).collect(),
            ..self.clone()
        }
    }
}

/// Particle count, burn-in rule and resampling scheme shared by all levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultilevelConfig {
    pub n_particles: usize,
    pub burn_in: BurnIn,
    pub scheme: ResampleScheme,
}

impl MultilevelConfig {
    pub fn new(n_particles: usize, burn_in: BurnIn) -> Self {
        Self {
            n_particles,
            burn_in,
            scheme: ResampleScheme::Multinomial,
        }
    }

    pub fn chain(&self, retained: usize) -> PimhConfig {
        PimhConfig::retaining(self.n_particles, retained, self.burn_in).with_scheme(self.scheme)
    }
}

/// One term of the multilevel sum, on the stream `stream.derive(level)`.
pub fn multilevel_component<P: ControlProblem + ?Sized>(
    problem: &P,
    schedule: &LevelSchedule,
    config: &MultilevelConfig,
    level: u32,
    stream: &Stream,
) -> Result<LevelComponent> {
    let run = || {
        let grid = schedule.grid(level)?;
        let chain = config.chain(schedule.samples_at(level));
        let s = stream.derive(level as u64);
        if level == schedule.trunc {
            single_level_component(problem, grid, &chain, &s)
        } else {
            level_difference(problem, grid, &chain, &s)
        }
    };
    run().map_err(|e| e.at_level(level))
}

/// `u^M + sum_{l = M+1}^{L} (u^l - u^{l-1})` with independent chains per
/// level.
pub fn multilevel_estimate<P: ControlProblem + ?Sized>(
    problem: &P,
    schedule: &LevelSchedule,
    config: &MultilevelConfig,
    stream: &Stream,
) -> Result<ControlEstimate> {
    let components = schedule
        .levels()
        .map(|l| multilevel_component(problem, schedule, config, l, stream))
        .collect::<Result<Vec<_>>>()?;
    let grid = schedule.grid(schedule.trunc)?;
    ControlEstimate::combine(schedule.trunc, grid.window(), components)
}
