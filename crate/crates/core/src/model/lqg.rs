use alloc::vec;
use alloc::vec::Vec;

use super::{resolve_gamma, ControlProblem};
use crate::error::{Error, Result};

/// Scalar linear-quadratic-Gaussian problem
/// `dX = A X dt + B u dt + dW` with cost `F X_T^2 + int (Q X^2 + R u^2) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgParams {
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub q: f64,
    pub r: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for LqgParams {
    fn default() -> Self {
        Self {
            a: -1.0,
            b: 1.0,
            f: 1.0,
            q: 1.0,
            r: 0.1,
            x0: -0.1,
            horizon: 1.0,
        }
    }
}

impl LqgParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.f, self.q, self.r, self.x0, self.horizon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("lqg", "parameters must be finite"));
        }
        if self.r <= 0.0 {
            return Err(Error::invalid("r", "control weight must be positive"));
        }
        if self.f < 0.0 {
            return Err(Error::invalid("f", "terminal weight must be nonnegative"));
        }
        if self.q < 0.0 {
            return Err(Error::invalid("q", "running weight must be nonnegative"));
        }
        if self.b == 0.0 {
            return Err(Error::invalid("b", "control gain must be nonzero"));
        }
        if self.horizon <= 0.0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Lqg {
    params: LqgParams,
    weight: [f64; 1],
    x0: [f64; 1],
    gamma: f64,
}

impl Lqg {
    pub fn new(params: LqgParams) -> Result<Self> {
        params.validate()?;
        let mut lqg = Self {
            params,
            weight: [params.r],
            x0: [params.x0],
            gamma: f64::NAN,
        };
        let probes: Vec<Vec<f64>> = [-1.0, 0.5, 2.0].iter().map(|&x| vec![x]).collect();
        lqg.gamma = resolve_gamma(&lqg, &probes)?;
        Ok(lqg)
    }

    pub fn params(&self) -> &LqgParams {
        &self.params
    }
}

impl ControlProblem for Lqg {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.params.a * x[0];
    }
    fn control_matrix(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.params.b;
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn control_left_inverse(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 / self.params.b;
    }
    fn diffusion_left_inverse(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn running_cost(&self, x: &[f64]) -> f64 {
        self.params.q * x[0] * x[0]
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.params.f * x[0] * x[0]
    }
    fn control_weight(&self) -> &[f64] {
        &self.weight
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    #[inline]
    fn euler_step(&self, z: &[f64], w: &[f64], h: f64, out: &mut [f64]) {
        out[0] = z[0] + self.params.a * z[0] * h + w[0];
    }

    #[inline]
    fn noise_to_control(&self, _z: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = w[0] / self.params.b;
    }
}
