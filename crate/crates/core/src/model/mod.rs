//! Control problem instances.
//!
//! A problem is the controlled diffusion
//! `dX = f(X)dt + e(X)u dt + g(X)dW` on `[0, T]` with running cost `l`,
//! terminal cost `phi`, quadratic control weight `R` and the noise/cost
//! coupling `gamma * e R^{-1} e^T = g g^T`. Everything the estimators need is
//! the uncontrolled part (`f`, `g`), the costs, `gamma` and the left inverse
//! of `e` used by the control test function.
//!
//! All matrices are row-major slices. Implementations must be pure: the same
//! input always gives the same output, and no interior mutation, so one
//! problem value can be shared between concurrent workers.

mod gamma;
mod lqg;
mod riccati;
mod sivr;

pub use gamma::{assumption_residual, left_inverse_residual, resolve_gamma};
pub use lqg::{Lqg, LqgParams};
pub use riccati::{
    lqg_discrete_control, riccati_gain, riccati_gain_adaptive, riccati_reference_control,
    truncated_reference_control, RiccatiConvention,
};
pub use sivr::{simplex_probes, Sivr, SivrParams};

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

pub trait ControlProblem: Send + Sync {
    /// `n`
    fn state_dim(&self) -> usize;
    /// `m`
    fn control_dim(&self) -> usize;
    /// `d`
    fn noise_dim(&self) -> usize;

    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// `n x m`
    fn control_matrix(&self, x: &[f64], out: &mut [f64]);
    /// `n x d`
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    /// `m x n`, with `e^{-1}(x) e(x) = I_m`.
    fn control_left_inverse(&self, x: &[f64], out: &mut [f64]);
    /// `d x n`, with `g^{-1}(x) g(x) = I_d`.
    fn diffusion_left_inverse(&self, x: &[f64], out: &mut [f64]);

    fn running_cost(&self, x: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64]) -> f64;

    /// `m x m`, symmetric positive definite.
    fn control_weight(&self) -> &[f64];
    fn gamma(&self) -> f64;
    fn initial_state(&self) -> &[f64];
    fn horizon(&self) -> f64;

    /// One Euler–Maruyama step `z + f(z) h + g(z) w`.
    fn euler_step(&self, z: &[f64], w: &[f64], h: f64, out: &mut [f64]) {
        let (n, d) = (self.state_dim(), self.noise_dim());
        self.drift(z, out);
        let mut g = vec![0.0; n * d];
        self.diffusion(z, &mut g);
        for i in 0..n {
            let gw: f64 = (0..d).map(|j| g[i * d + j] * w[j]).sum();
            out[i] = z[i] + out[i] * h + gw;
        }
    }

    /// `e^{-1}(z) g(z) w`, the per-step summand of the control test function.
    fn noise_to_control(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        let (n, m, d) = (self.state_dim(), self.control_dim(), self.noise_dim());
        let mut g = vec![0.0; n * d];
        let mut einv = vec![0.0; m * n];
        let mut gw = vec![0.0; n];
        self.diffusion(z, &mut g);
        self.control_left_inverse(z, &mut einv);
        linalg::mat_vec(&g, n, d, w, &mut gw);
        linalg::mat_vec(&einv, m, n, &gw, out);
    }
}

impl<P: ControlProblem + ?Sized> ControlProblem for &P {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (**self).drift(x, out)
    }
    fn control_matrix(&self, x: &[f64], out: &mut [f64]) {
        (**self).control_matrix(x, out)
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (**self).diffusion(x, out)
    }
    fn control_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        (**self).control_left_inverse(x, out)
    }
    fn diffusion_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        (**self).diffusion_left_inverse(x, out)
    }
    fn running_cost(&self, x: &[f64]) -> f64 {
        (**self).running_cost(x)
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        (**self).terminal_cost(x)
    }
    fn control_weight(&self) -> &[f64] {
        (**self).control_weight()
    }
    fn gamma(&self) -> f64 {
        (**self).gamma()
    }
    fn initial_state(&self) -> &[f64] {
        (**self).initial_state()
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn euler_step(&self, z: &[f64], w: &[f64], h: f64, out: &mut [f64]) {
        (**self).euler_step(z, w, h, out)
    }
    fn noise_to_control(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        (**self).noise_to_control(z, w, out)
    }
}

type VecField = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type ScalarField = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A problem assembled from user-supplied closures.
///
/// Boundedness and Lipschitz continuity of the supplied functions are the
/// caller's responsibility.
pub struct CustomProblem {
    n: usize,
    m: usize,
    d: usize,
    drift: VecField,
    control_matrix: VecField,
    diffusion: VecField,
    control_left_inverse: VecField,
    diffusion_left_inverse: VecField,
    running_cost: ScalarField,
    terminal_cost: ScalarField,
    control_weight: Vec<f64>,
    gamma: f64,
    x0: Vec<f64>,
    horizon: f64,
}

impl core::fmt::Debug for CustomProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CustomProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("gamma", &self.gamma)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl CustomProblem {
    /// Starts from the driftless problem `dZ = dW` in `n` dimensions with
    /// `e = g = I`, zero costs, `R = I` and `gamma = 1`.
    pub fn brownian(n: usize, x0: Vec<f64>, horizon: f64) -> Self {
        let ident = move |_: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                out[i * n + i] = 1.0;
            }
        };
        Self {
            n,
            m: n,
            d: n,
            drift: Box::new(|_, out| out.iter_mut().for_each(|v| *v = 0.0)),
            control_matrix: Box::new(ident),
            diffusion: Box::new(ident),
            control_left_inverse: Box::new(ident),
            diffusion_left_inverse: Box::new(ident),
            running_cost: Box::new(|_| 0.0),
            terminal_cost: Box::new(|_| 0.0),
            control_weight: linalg::identity(n),
            gamma: 1.0,
            x0,
            horizon,
        }
    }

    /// Assembles a full problem. `gamma` is resolved from the supplied
    /// functions at `probes`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: (usize, usize, usize),
        drift: VecField,
        control_matrix: VecField,
        diffusion: VecField,
        control_left_inverse: VecField,
        diffusion_left_inverse: VecField,
        running_cost: ScalarField,
        terminal_cost: ScalarField,
        control_weight: Vec<f64>,
        x0: Vec<f64>,
        horizon: f64,
        probes: &[Vec<f64>],
    ) -> Result<Self> {
        let (n, m, d) = dims;
        if control_weight.len() != m * m {
            return Err(Error::invalid("control_weight", "must be m x m"));
        }
        if x0.len() != n {
            return Err(Error::invalid("x0", "length must equal the state dimension"));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        let mut p = Self {
            n,
            m,
            d,
            drift,
            control_matrix,
            diffusion,
            control_left_inverse,
            diffusion_left_inverse,
            running_cost,
            terminal_cost,
            control_weight,
            gamma: 1.0,
            x0,
            horizon,
        };
        p.gamma = resolve_gamma(&p, probes)?;
        Ok(p)
    }

    pub fn with_drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Box::new(f);
        self
    }

    pub fn with_running_cost(mut self, l: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.running_cost = Box::new(l);
        self
    }

    pub fn with_terminal_cost(
        mut self,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal_cost = Box::new(phi);
        self
    }

    /// Sets `gamma` directly, bypassing resolution. The caller asserts the
    /// noise/cost relation holds.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

impl ControlProblem for CustomProblem {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
    fn control_matrix(&self, x: &[f64], out: &mut [f64]) {
        (self.control_matrix)(x, out)
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }
    fn control_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        (self.control_left_inverse)(x, out)
    }
    fn diffusion_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion_left_inverse)(x, out)
    }
    fn running_cost(&self, x: &[f64]) -> f64 {
        (self.running_cost)(x)
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal_cost)(x)
    }
    fn control_weight(&self) -> &[f64] {
        &self.control_weight
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
}
