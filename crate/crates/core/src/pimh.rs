//! Particle independent Metropolis–Hastings over the single-level and the
//! coupled smoothing models.
//!
//! A chain is generic over what it keeps from each accepted proposal, so the
//! estimators can store a few numbers per state instead of whole paths.
//! Only `ln C` is stored.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::rng::Stream;
use crate::simulate::{CoupledPath, DiscretePath, LevelGrid};
use crate::smc::{run_coupled_smc_with, run_smc_with, ResampleScheme, SmcOutput};

const INIT_TAG: u64 = 0x696e_6974;
const PROPOSAL_TAG: u64 = 0x7072_6f70;
const ACCEPT_TAG: u64 = 0x6163_6370;

/// Attempts at drawing a valid initial state before giving up.
pub const INIT_ATTEMPTS: u64 = 10;

/// How many initial chain states to discard, given the number of states to
/// retain afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BurnIn {
    /// `max(100, retained / 10)`
    #[default]
    Standard,
    Fixed(usize),
    /// `ceil(fraction * retained)`
    Fraction(f64),
}

impl BurnIn {
    pub fn for_retained(&self, retained: usize) -> usize {
        match *self {
            BurnIn::Standard => (retained / 10).max(100),
            BurnIn::Fixed(b) => b,
            BurnIn::Fraction(f) => libm::ceil(f.max(0.0) * retained as f64) as usize,
        }
    }
}

/// `ln u < ln C* - ln C`, i.e. accept with probability `min(1, C*/C)`.
#[inline]
pub fn accepts(log_c_current: f64, log_c_proposal: f64, u: f64) -> bool {
    libm::log(u) < log_c_proposal - log_c_current
}

#[derive(Debug, Clone, PartialEq)]
pub struct PimhChain<S> {
    pub state: S,
    pub log_c: f64,
    pub iterations: usize,
    pub accepted: usize,
    /// Particle filter runs so far, including the initial one(s).
    pub smc_runs: usize,
}

impl<S> PimhChain<S> {
    /// Draws the initial state. A run that ends with all-zero weights is
    /// retried with a fresh stream, up to [`INIT_ATTEMPTS`] times.
    pub fn init<F>(propose: &mut F, stream: &Stream) -> Result<Self>
    where
        F: FnMut(&mut Stream) -> Result<(S, f64)>,
    {
        let base = stream.derive(INIT_TAG);
        let mut last = Error::AllZeroWeights { step: 0 };
        for attempt in 0..INIT_ATTEMPTS {
            match propose(&mut base.derive(attempt)) {
                Ok((state, log_c)) => {
                    return Ok(Self {
                        state,
                        log_c,
                        iterations: 0,
                        accepted: 0,
                        smc_runs: attempt as usize + 1,
                    })
                }
                Err(e @ Error::AllZeroWeights { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    /// One Metropolis–Hastings step with a fresh proposal. A proposal that
    /// fails with all-zero weights is a rejection; other failures abort.
    pub fn step<F>(&mut self, propose: &mut F, proposal_stream: &mut Stream, u: f64) -> Result<bool>
    where
        F: FnMut(&mut Stream) -> Result<(S, f64)>,
    {
        self.iterations += 1;
        self.smc_runs += 1;
        let accepted = match propose(proposal_stream) {
            Ok((state, log_c)) => {
                if accepts(self.log_c, log_c, u) {
                    self.state = state;
                    self.log_c = log_c;
                    true
                } else {
                    false
                }
            }
            Err(Error::AllZeroWeights { .. }) => false,
            Err(e) => return Err(e),
        };
        self.accepted += accepted as usize;
        Ok(accepted)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }
}

/// Diagnostics of a finished chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub iterations: usize,
    pub burn_in: usize,
    pub accepted: usize,
    pub smc_runs: usize,
    /// `ln C` of the current state after every iteration.
    pub log_c_trace: Vec<f64>,
    /// Accept/reject decision at every iteration.
    pub decisions: Vec<bool>,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.iterations.max(1) as f64
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }
}

/// Runs a chain for `n_iters` iterations and calls `visit` with the current
/// state of every iteration after the first `burn_in`.
///
/// Iteration `i` proposes from `stream.derive(PROPOSAL).derive(i)` and draws
/// its acceptance uniform from a separate sequential stream, so proposals do
/// not depend on earlier decisions.
pub fn run_chain<S, F, V>(propose: &mut F, n_iters: usize, burn_in: usize, stream: &Stream, mut visit: V) -> Result<ChainStats>
where
    F: FnMut(&mut Stream) -> Result<(S, f64)>,
    V: FnMut(&S),
{
    if n_iters == 0 {
        return Err(Error::invalid("n_iters", "must be at least 1"));
    }
    if burn_in >= n_iters {
        return Err(Error::invalid("burn_in", "must be smaller than the number of iterations"));
    }
    let mut chain = PimhChain::init(propose, stream)?;
    let proposals = stream.derive(PROPOSAL_TAG);
    let mut uniforms = stream.derive(ACCEPT_TAG);
    let mut log_c_trace = Vec::with_capacity(n_iters);
    let mut decisions = Vec::with_capacity(n_iters);
    for i in 1..=n_iters {
        let u = uniforms.uniform();
        let accepted = chain.step(propose, &mut proposals.derive(i as u64), u)?;
        log_c_trace.push(chain.log_c);
        decisions.push(accepted);
        if i > burn_in {
            visit(&chain.state);
        }
    }
    Ok(ChainStats {
        iterations: n_iters,
        burn_in,
        accepted: chain.accepted,
        smc_runs: chain.smc_runs,
        log_c_trace,
        decisions,
    })
}

/// Particle count, iteration budget and resampling scheme of a PIMH run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PimhConfig {
    pub n_particles: usize,
    pub n_iters: usize,
    pub burn_in: usize,
    pub scheme: ResampleScheme,
}

impl PimhConfig {
    pub fn new(n_particles: usize, n_iters: usize, burn_in: usize) -> Self {
        Self {
            n_particles,
            n_iters,
            burn_in,
            scheme: ResampleScheme::Multinomial,
        }
    }

    /// Enough iterations to retain `retained` states after the burn-in rule.
    pub fn retaining(n_particles: usize, retained: usize, rule: BurnIn) -> Self {
        let burn_in = rule.for_retained(retained);
        Self::new(n_particles, retained + burn_in, burn_in)
    }

    pub fn with_scheme(mut self, scheme: ResampleScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Retained states of a chain with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PimhRun<T> {
    pub states: Vec<T>,
    pub stats: ChainStats,
}

fn keep_trajectory<T>(out: SmcOutput<T>) -> (T, f64) {
    (out.trajectory, out.log_normalizing_constant)
}

pub fn run_pimh<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<PimhRun<DiscretePath>> {
    let mut propose =
        |s: &mut Stream| run_smc_with(problem, grid, config.n_particles, config.scheme, s).map(keep_trajectory);
    let mut states = Vec::with_capacity(config.n_iters - config.burn_in.min(config.n_iters));
    let stats = run_chain(&mut propose, config.n_iters, config.burn_in, stream, |s: &DiscretePath| {
        states.push(s.clone())
    })?;
    Ok(PimhRun { states, stats })
}

pub fn run_coupled_pimh<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    config: &PimhConfig,
    stream: &Stream,
) -> Result<PimhRun<CoupledPath>> {
    let mut propose = |s: &mut Stream| {
        run_coupled_smc_with(problem, fine_grid, config.n_particles, config.scheme, s).map(keep_trajectory)
    };
    let mut states = Vec::with_capacity(config.n_iters - config.burn_in.min(config.n_iters));
    let stats = run_chain(&mut propose, config.n_iters, config.burn_in, stream, |s: &CoupledPath| {
        states.push(s.clone())
    })?;
    Ok(PimhRun { states, stats })
}
