//! The smoothing-model layer: per-step potentials, coupled potentials,
//! Radon–Nikodym weights and the control test function.
//!
//! Steps are 1-based: step `k` carries the potential of `z_{kh}`, and `z_0`
//! carries none. All products are kept as sums of logs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::simulate::{CoupledPath, DiscretePath, LevelGrid};

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// `ln G_k`: `-h l(z) / gamma` for `k < 2^l`, `-phi(z) / gamma` at `k = 2^l`.
#[inline]
pub fn log_potential<P: ControlProblem + ?Sized>(problem: &P, grid: &LevelGrid, k: usize, z: &[f64]) -> f64 {
    debug_assert!(k >= 1 && k <= grid.steps());
    if k == grid.steps() {
        -problem.terminal_cost(z) / problem.gamma()
    } else {
        -grid.step_size() * problem.running_cost(z) / problem.gamma()
    }
}

pub fn potential<P: ControlProblem + ?Sized>(problem: &P, grid: &LevelGrid, k: usize, z: &[f64]) -> f64 {
    libm::exp(log_potential(problem, grid, k, z))
}

/// `ln` of the coupled potential at fine step `k`: `G_k + 1` at odd `k`, and
/// `max(G_k(fine), G_{k/2}(coarse))` at even `k`. The coarse state must be
/// given exactly when `k` is even.
pub fn log_coupled_potential<P: ControlProblem + ?Sized>(
    problem: &P,
    fine: &LevelGrid,
    k: usize,
    z_fine: &[f64],
    z_coarse: Option<&[f64]>,
) -> Result<f64> {
    let g_fine = log_potential(problem, fine, k, z_fine);
    match (k % 2 == 0, z_coarse) {
        (false, None) => Ok(softplus(g_fine)),
        (true, Some(zc)) => {
            let coarse = fine.coarser()?;
            Ok(g_fine.max(log_potential(problem, &coarse, k / 2, zc)))
        }
        _ => Err(Error::CoarseStateMismatch { step: k }),
    }
}

pub fn coupled_potential<P: ControlProblem + ?Sized>(
    problem: &P,
    fine: &LevelGrid,
    k: usize,
    z_fine: &[f64],
    z_coarse: Option<&[f64]>,
) -> Result<f64> {
    log_coupled_potential(problem, fine, k, z_fine, z_coarse).map(libm::exp)
}

/// Per-step log-potentials `ln G_1 .. ln G_{2^l}` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    pub grid: LevelGrid,
    log_values: Vec<f64>,
}

impl PotentialTable {
    pub fn new<P: ControlProblem + ?Sized>(problem: &P, path: &DiscretePath) -> Self {
        let grid = path.grid;
        let log_values = (1..=grid.steps())
            .map(|k| log_potential(problem, &grid, k, path.state(k)))
            .collect();
        Self { grid, log_values }
    }

    /// `ln G_k` for `k` in `1..=2^l`.
    pub fn log_value(&self, k: usize) -> f64 {
        self.log_values[k - 1]
    }

    pub fn value(&self, k: usize) -> f64 {
        libm::exp(self.log_value(k))
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// `ln G^l(z_{h:1})`.
    pub fn log_product(&self) -> f64 {
        self.log_values.iter().sum()
    }

    pub fn product(&self) -> f64 {
        libm::exp(self.log_product())
    }
}

/// `ln` of the full coupled potential product along a coupled path.
pub fn log_coupled_product<P: ControlProblem + ?Sized>(problem: &P, coupled: &CoupledPath) -> Result<f64> {
    let grid = coupled.fine.grid;
    let mut total = 0.0;
    for k in 1..=grid.steps() {
        let zc = (k % 2 == 0).then(|| coupled.coarse.state(k / 2));
        total += log_coupled_potential(problem, &grid, k, coupled.fine.state(k), zc)?;
    }
    Ok(total)
}

/// `(ln H1, ln H2)`: the fine and coarse potential products, each divided by
/// the coupled product.
pub fn log_rn_weights<P: ControlProblem + ?Sized>(problem: &P, coupled: &CoupledPath) -> Result<(f64, f64)> {
    let denom = log_coupled_product(problem, coupled)?;
    let fine = PotentialTable::new(problem, &coupled.fine).log_product();
    let coarse = PotentialTable::new(problem, &coupled.coarse).log_product();
    Ok((fine - denom, coarse - denom))
}

pub fn rn_weights<P: ControlProblem + ?Sized>(problem: &P, coupled: &CoupledPath) -> Result<(f64, f64)> {
    let (a, b) = log_rn_weights(problem, coupled)?;
    Ok((libm::exp(a), libm::exp(b)))
}

/// `sum_{k < r_steps} e^{-1}(z_{kh}) g(z_{kh}) W_{k+1}` from the stored
/// increments.
pub fn test_function<P: ControlProblem + ?Sized>(problem: &P, path: &DiscretePath) -> Vec<f64> {
    let m = problem.control_dim();
    let mut acc = vec![0.0; m];
    let mut term = vec![0.0; m];
    for k in 0..path.grid.window_steps() {
        problem.noise_to_control(path.state(k), path.increment(k + 1), &mut term);
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
    }
    acc
}

/// Same sum written with state differences,
/// `e^{-1} g g^{-1} (z_{(k+1)h} - z_{kh} - f(z_{kh}) h)`. Cross-check only.
pub fn test_function_from_states<P: ControlProblem + ?Sized>(problem: &P, path: &DiscretePath) -> Vec<f64> {
    let (n, m, d) = (problem.state_dim(), problem.control_dim(), problem.noise_dim());
    let h = path.grid.step_size();
    let mut f = vec![0.0; n];
    let mut ginv = vec![0.0; d * n];
    let mut resid = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut term = vec![0.0; m];
    let mut acc = vec![0.0; m];
    for k in 0..path.grid.window_steps() {
        let z = path.state(k);
        problem.drift(z, &mut f);
        problem.diffusion_left_inverse(z, &mut ginv);
        for i in 0..n {
            resid[i] = path.state(k + 1)[i] - z[i] - f[i] * h;
        }
        crate::linalg::mat_vec(&ginv, d, n, &resid, &mut w);
        problem.noise_to_control(z, &w, &mut term);
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
    }
    acc
}
