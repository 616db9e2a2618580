//! Euler–Maruyama paths of the uncontrolled diffusion `dZ = f(Z)dt + g(Z)dW`
//! on dyadic grids, and fine/coarse pairs driven by the same Brownian path.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::rng::Stream;

/// Dyadic time grid on `[0, T]` at level `l` (`2^l` steps of size
/// `h = T 2^{-l}`), together with the truncation index `M` that fixes the
/// test-function window `[0, r]`, `r = T 2^{-(M-1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid {
    level: u32,
    trunc: u32,
    horizon: f64,
}

impl LevelGrid {
    pub fn new(level: u32, trunc: u32, horizon: f64) -> Result<Self> {
        if level < 1 || level > 30 {
            return Err(Error::invalid("level", "must lie in 1..=30"));
        }
        if trunc < 2 || trunc > level {
            return Err(Error::invalid("trunc", "need 1 < M <= level"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        Ok(Self {
            level,
            trunc,
            horizon,
        })
    }

    /// A grid whose test-function window is the whole horizon (`M = 1`).
    /// Meant for small reduced models; it has no coarser partner.
    pub fn full_window(level: u32, horizon: f64) -> Result<Self> {
        let mut grid = Self::new(level.max(2), 2, horizon)?;
        grid.level = level;
        grid.trunc = 1;
        if level < 1 {
            return Err(Error::invalid("level", "must lie in 1..=30"));
        }
        Ok(grid)
    }

    pub fn for_problem<P: ControlProblem + ?Sized>(problem: &P, level: u32, trunc: u32) -> Result<Self> {
        Self::new(level, trunc, problem.horizon())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn trunc(&self) -> u32 {
        self.trunc
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        1usize << self.level
    }

    pub fn step_size(&self) -> f64 {
        libm::ldexp(self.horizon, -(self.level as i32))
    }

    /// Truncation time `r`.
    pub fn window(&self) -> f64 {
        libm::ldexp(self.horizon, -(self.trunc as i32 - 1))
    }

    /// Number of steps covering `[0, r]`.
    pub fn window_steps(&self) -> usize {
        1usize << (self.level - self.trunc + 1)
    }

    /// The grid one level down. Fails below the truncation level.
    pub fn coarser(&self) -> Result<Self> {
        Self::new(self.level - 1, self.trunc, self.horizon)
    }

    pub fn finer(&self) -> Result<Self> {
        Self::new(self.level + 1, self.trunc, self.horizon)
    }
}

/// One Euler–Maruyama step `z + f(z) h + g(z) w`.
pub fn euler_step<P: ControlProblem + ?Sized>(problem: &P, z: &[f64], w: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; problem.state_dim()];
    problem.euler_step(z, w, h, &mut out);
    out
}

/// A simulated path with its Brownian increments.
///
/// `states` holds `z_0 .. z_{2^l}` (row `k` is `z_{kh}`), `increments` holds
/// `W_1 .. W_{2^l}` with `z_k = z_{k-1} + f(z_{k-1}) h + g(z_{k-1}) W_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub grid: LevelGrid,
    n: usize,
    d: usize,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl DiscretePath {
    pub(crate) fn from_parts(grid: LevelGrid, n: usize, d: usize, states: Vec<f64>, increments: Vec<f64>) -> Self {
        debug_assert_eq!(states.len(), (grid.steps() + 1) * n);
        debug_assert_eq!(increments.len(), grid.steps() * d);
        Self {
            grid,
            n,
            d,
            states,
            increments,
        }
    }

    /// Replays `increments` (row-major, `2^l x d`) from the problem's initial
    /// state.
    pub fn from_increments<P: ControlProblem + ?Sized>(
        problem: &P,
        grid: LevelGrid,
        increments: Vec<f64>,
    ) -> Result<Self> {
        let (n, d) = (problem.state_dim(), problem.noise_dim());
        let steps = grid.steps();
        if increments.len() != steps * d {
            return Err(Error::invalid("increments", "length must be 2^l * d"));
        }
        let h = grid.step_size();
        let mut states = vec![0.0; (steps + 1) * n];
        states[..n].copy_from_slice(problem.initial_state());
        for k in 1..=steps {
            let (prev, next) = states.split_at_mut(k * n);
            let out = &mut next[..n];
            problem.euler_step(&prev[(k - 1) * n..], &increments[(k - 1) * d..k * d], h, out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: k });
            }
        }
        Ok(Self::from_parts(grid, n, d, states, increments))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    /// `z_{kh}` for `k` in `0..=2^l`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    /// `W_k` for `k` in `1..=2^l`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[(k - 1) * self.d..k * self.d]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Largest absolute deviation between stored states and a replay of the
    /// stored increments through the Euler step.
    pub fn reconstruction_error<P: ControlProblem + ?Sized>(&self, problem: &P) -> f64 {
        let h = self.grid.step_size();
        let mut out = vec![0.0; self.n];
        let mut worst = linf(self.state(0), problem.initial_state());
        for k in 1..=self.grid.steps() {
            problem.euler_step(self.state(k - 1), self.increment(k), h, &mut out);
            worst = worst.max(linf(&out, self.state(k)));
        }
        worst
    }

    /// Increments recovered from consecutive states through the diffusion
    /// left inverse, `g^{-1}(z) (z' - z - f(z) h)`.
    pub fn increments_from_states<P: ControlProblem + ?Sized>(&self, problem: &P) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let h = self.grid.step_size();
        let mut f = vec![0.0; n];
        let mut ginv = vec![0.0; d * n];
        let mut resid = vec![0.0; n];
        let mut out = vec![0.0; self.grid.steps() * d];
        for k in 1..=self.grid.steps() {
            let z = self.state(k - 1);
            problem.drift(z, &mut f);
            problem.diffusion_left_inverse(z, &mut ginv);
            for i in 0..n {
                resid[i] = self.state(k)[i] - z[i] - f[i] * h;
            }
            crate::linalg::mat_vec(&ginv, d, n, &resid, &mut out[(k - 1) * d..k * d]);
        }
        out
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Fine path at level `l` and coarse path at level `l - 1` whose increments
/// are exact pairwise sums of the fine ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub fine: DiscretePath,
    pub coarse: DiscretePath,
}

impl CoupledPath {
    /// Largest absolute gap between each coarse increment and the sum of the
    /// two fine increments it covers. Zero for a valid coupling.
    pub fn coupling_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 1..=self.coarse.grid.steps() {
            let a = self.fine.increment(2 * k - 1);
            let b = self.fine.increment(2 * k);
            for ((c, x), y) in self.coarse.increment(k).iter().zip(a).zip(b) {
                worst = worst.max((c - (x + y)).abs());
            }
        }
        worst
    }
}

/// Draws `2^l x d` standard normals from `stream` in step-major order
/// (all components of `W_1`, then `W_2`, ...) scaled by `sqrt(h)`, and
/// integrates the Euler chain.
pub fn simulate_path<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    stream: &mut Stream,
) -> Result<DiscretePath> {
    let (n, d) = (problem.state_dim(), problem.noise_dim());
    let steps = grid.steps();
    let h = grid.step_size();
    let sqrt_h = libm::sqrt(h);
    let mut states = vec![0.0; (steps + 1) * n];
    let mut increments = vec![0.0; steps * d];
    states[..n].copy_from_slice(problem.initial_state());
    for k in 1..=steps {
        let w = &mut increments[(k - 1) * d..k * d];
        for wj in w.iter_mut() {
            *wj = sqrt_h * stream.normal();
        }
        let (prev, next) = states.split_at_mut(k * n);
        let out = &mut next[..n];
        problem.euler_step(&prev[(k - 1) * n..], w, h, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
    }
    Ok(DiscretePath::from_parts(grid, n, d, states, increments))
}

/// Sums consecutive pairs of fine increments into coarse increments.
pub fn coarsen_increments(fine: &[f64], d: usize) -> Vec<f64> {
    let coarse_steps = fine.len() / (2 * d);
    let mut out = vec![0.0; coarse_steps * d];
    for k in 0..coarse_steps {
        for j in 0..d {
            out[k * d + j] = fine[2 * k * d + j] + fine[(2 * k + 1) * d + j];
        }
    }
    out
}

/// Simulates the fine path exactly as [`simulate_path`] would at the fine
/// level and drives the coarse path with the pairwise-summed increments.
pub fn simulate_coupled<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    stream: &mut Stream,
) -> Result<CoupledPath> {
    let coarse_grid = fine_grid.coarser()?;
    let fine = simulate_path(problem, fine_grid, stream)?;
    let coarse_incr = coarsen_increments(fine.increments(), problem.noise_dim());
    let coarse = DiscretePath::from_increments(problem, coarse_grid, coarse_incr)?;
    Ok(CoupledPath { fine, coarse })
}
