use alloc::vec;
use alloc::vec::Vec;

use super::{resolve_gamma, ControlProblem};
use crate::error::{Error, Result};

/// Stochastic susceptible–infected–vaccinated–removed epidemic with a
/// vaccination-rate control acting on the susceptible class.
///
/// State `(S, I, V, R)` lives on the simplex `S + I + V + R = 1`; the drift,
/// the control direction and the noise direction all preserve the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SivrParams {
    /// Birth and death rate.
    pub beta: f64,
    /// Contact rate.
    pub kappa: f64,
    /// Curing rate.
    pub lambda: f64,
    /// Vaccine inefficacy, in (0, 1).
    pub epsilon: f64,
    /// Loss of vaccine effectiveness.
    pub theta: f64,
    /// Small leak of vaccinated susceptibles into the infected class.
    pub varrho: f64,
    pub sigma: f64,
    pub sigma_varrho: f64,
    /// Running cost weight on the infected fraction.
    pub q_weight: f64,
    /// Control cost weight.
    pub r_weight: f64,
    pub x0: [f64; 4],
    pub horizon: f64,
}

impl Default for SivrParams {
    fn default() -> Self {
        Self {
            beta: 0.016,
            kappa: 0.55,
            lambda: 0.45,
            epsilon: 0.4,
            theta: 0.1,
            varrho: 0.01,
            sigma: 0.4,
            sigma_varrho: 59.0,
            q_weight: 1.0,
            r_weight: 0.05,
            x0: [0.75, 0.15, 0.05, 0.05],
            horizon: 3.0,
        }
    }
}

const CONSTRAINT_TOL: f64 = 1e-12;

impl SivrParams {
    /// `kappa / (beta + lambda)`
    pub fn reproduction_number(&self) -> f64 {
        self.kappa / (self.beta + self.lambda)
    }

    /// `epsilon + (sigma_varrho + 1) varrho - 1`; zero when the noise is
    /// aligned with the control direction.
    pub fn alignment_defect(&self) -> f64 {
        self.epsilon + (self.sigma_varrho + 1.0) * self.varrho - 1.0
    }

    /// Checks everything except the noise/control alignment.
    fn validate_basic(&self) -> Result<()> {
        let scalars = [
            self.beta,
            self.kappa,
            self.lambda,
            self.epsilon,
            self.theta,
            self.varrho,
            self.sigma,
            self.sigma_varrho,
            self.q_weight,
            self.r_weight,
            self.horizon,
        ];
        if scalars.iter().chain(&self.x0).any(|v| !v.is_finite()) {
            return Err(Error::invalid("sivr", "parameters must be finite"));
        }
        if self.r_weight <= 0.0 {
            return Err(Error::invalid("r_weight", "must be positive"));
        }
        if self.q_weight < 0.0 {
            return Err(Error::invalid("q_weight", "must be nonnegative"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if self.horizon <= 0.0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if self.x0.iter().any(|&v| v < 0.0) || self.x0[0] <= 0.0 {
            return Err(Error::invalid(
                "x0",
                "compartments must be nonnegative with S > 0",
            ));
        }
        let total: f64 = self.x0.iter().sum();
        if (total - 1.0).abs() > CONSTRAINT_TOL {
            return Err(Error::invalid("x0", "initial state must lie on the simplex"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_basic()?;
        if self.alignment_defect().abs() > CONSTRAINT_TOL {
            return Err(Error::invalid(
                "sigma_varrho",
                "epsilon + (sigma_varrho + 1) varrho must equal 1",
            ));
        }
        Ok(())
    }
}

/// Probe states on the simplex used to resolve `gamma`.
pub fn simplex_probes(x0: [f64; 4]) -> Vec<Vec<f64>> {
    vec![
        x0.to_vec(),
        vec![0.5, 0.2, 0.2, 0.1],
        vec![0.3, 0.3, 0.2, 0.2],
        vec![0.9, 0.05, 0.03, 0.02],
        vec![0.1, 0.1, 0.4, 0.4],
    ]
}

#[derive(Debug, Clone)]
pub struct Sivr {
    p: SivrParams,
    weight: [f64; 1],
    gamma: f64,
}

impl Sivr {
    /// Builds the problem and resolves `gamma` from the noise/cost relation.
    /// Fails with [`Error::NoConsistentGamma`] when the noise is not aligned
    /// with the control direction.
    pub fn new(params: SivrParams) -> Result<Self> {
        let mut sivr = Self::unresolved(params)?;
        sivr.gamma = resolve_gamma(&sivr, &simplex_probes(params.x0))?;
        params.validate()?;
        Ok(sivr)
    }

    /// The problem with `gamma` left unset (NaN), for probing the noise/cost
    /// relation on parameter sets that may violate it.
    pub fn unresolved(params: SivrParams) -> Result<Self> {
        params.validate_basic()?;
        Ok(Self {
            p: params,
            weight: [params.r_weight],
            gamma: f64::NAN,
        })
    }

    /// Same problem started from `x` with `horizon` to go. Only the
    /// sum-to-one constraint is checked on `x`: Euler states may leave the
    /// nonnegative orthant and the coefficients are polynomial there.
    pub fn restarted(&self, x: [f64; 4], horizon: f64) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0", "state must be finite"));
        }
        if (x.iter().sum::<f64>() - 1.0).abs() > CONSTRAINT_TOL {
            return Err(Error::invalid("x0", "state must lie on the simplex"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        let mut next = self.clone();
        next.p.x0 = x;
        next.p.horizon = horizon;
        Ok(next)
    }

    pub fn params(&self) -> &SivrParams {
        &self.p
    }

    /// Noise direction coefficients `(g_S, g_I, g_V)` divided by `sigma S`.
    #[inline]
    fn noise_shape(&self) -> [f64; 3] {
        let p = &self.p;
        let lean = p.epsilon + p.sigma_varrho * p.varrho;
        [-1.0, 1.0 - lean, lean]
    }

    /// Controlled Euler step `z + (f(z) + e(z) u) h + g(z) w`.
    pub fn controlled_step(&self, z: &[f64], u: f64, w: f64, h: f64, out: &mut [f64]) {
        let mut f = [0.0; 4];
        self.drift(z, &mut f);
        let s = z[0];
        let control = [-s, self.p.varrho * s, (1.0 - self.p.varrho) * s, 0.0];
        let shape = self.noise_shape();
        let noise = [
            self.p.sigma * s * shape[0],
            self.p.sigma * s * shape[1],
            self.p.sigma * s * shape[2],
            0.0,
        ];
        for i in 0..4 {
            out[i] = z[i] + (f[i] + control[i] * u) * h + noise[i] * w;
        }
    }
}

impl ControlProblem for Sivr {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.p;
        let (s, i, v, r) = (x[0], x[1], x[2], x[3]);
        out[0] = p.beta - p.beta * s - p.kappa * i * s + p.theta * v;
        out[1] = p.kappa * s * i + p.epsilon * p.kappa * v * i - p.lambda * i - p.beta * i;
        out[2] = -p.epsilon * p.kappa * i * v - p.beta * v - p.theta * v;
        out[3] = p.lambda * i - p.beta * r;
    }

    fn control_matrix(&self, x: &[f64], out: &mut [f64]) {
        let s = x[0];
        out[0] = -s;
        out[1] = self.p.varrho * s;
        out[2] = (1.0 - self.p.varrho) * s;
        out[3] = 0.0;
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let shape = self.noise_shape();
        let scale = self.p.sigma * x[0];
        out[0] = scale * shape[0];
        out[1] = scale * shape[1];
        out[2] = scale * shape[2];
        out[3] = 0.0;
    }

    /// Normal-equation left inverse on `(S, I, V)`; the `R` column is zero.
    fn control_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        let s = x[0];
        let rho = self.p.varrho;
        let col = [-s, rho * s, (1.0 - rho) * s];
        let norm2: f64 = col.iter().map(|c| c * c).sum();
        out[0] = col[0] / norm2;
        out[1] = col[1] / norm2;
        out[2] = col[2] / norm2;
        out[3] = 0.0;
    }

    fn diffusion_left_inverse(&self, x: &[f64], out: &mut [f64]) {
        let mut g = [0.0; 4];
        self.diffusion(x, &mut g);
        let norm2: f64 = g.iter().map(|c| c * c).sum();
        for (o, gi) in out.iter_mut().zip(g) {
            *o = gi / norm2;
        }
    }

    fn running_cost(&self, x: &[f64]) -> f64 {
        self.p.q_weight * x[1]
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        x[1] * x[1]
    }

    fn control_weight(&self) -> &[f64] {
        &self.weight
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn initial_state(&self) -> &[f64] {
        &self.p.x0
    }

    fn horizon(&self) -> f64 {
        self.p.horizon
    }

    #[inline]
    fn euler_step(&self, z: &[f64], w: &[f64], h: f64, out: &mut [f64]) {
        self.controlled_step(z, 0.0, w[0], h, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assumption_residual, left_inverse_residual};

    #[test]
    fn defaults_resolve_gamma() {
        let sivr = Sivr::new(SivrParams::default()).unwrap();
        assert!((sivr.gamma() - 0.008).abs() < 1e-15);
        assert!(SivrParams::default().reproduction_number() > 1.0);
        assert!(SivrParams::default().alignment_defect().abs() < 1e-12);
    }

    #[test]
    fn misaligned_noise_has_no_gamma() {
        let p = SivrParams {
            sigma_varrho: 58.0,
            ..SivrParams::default()
        };
        assert!(matches!(Sivr::new(p), Err(Error::NoConsistentGamma { .. })));
        let unresolved = Sivr::unresolved(p).unwrap();
        assert!(matches!(
            resolve_gamma(&unresolved, &simplex_probes(p.x0)),
            Err(Error::NoConsistentGamma { .. })
        ));
    }

    #[test]
    fn off_simplex_start_is_rejected() {
        let p = SivrParams {
            x0: [0.75, 0.15, 0.05, 0.06],
            ..SivrParams::default()
        };
        assert!(Sivr::new(p).is_err());
    }

    #[test]
    fn restart_keeps_gamma_and_allows_negative_compartments() {
        let sivr = Sivr::new(SivrParams::default()).unwrap();
        let next = sivr.restarted([0.9, 0.12, -0.1, 0.08], 1.5).unwrap();
        assert_eq!(next.gamma(), sivr.gamma());
        assert_eq!(next.params().horizon, 1.5);
        assert!(sivr.restarted([0.9, 0.12, -0.1, 0.1], 1.5).is_err());
        assert!(sivr.restarted([0.75, 0.15, 0.05, 0.05], 0.0).is_err());
    }

    #[test]
    fn drift_and_noise_preserve_the_simplex() {
        let sivr = Sivr::new(SivrParams::default()).unwrap();
        let beta = sivr.params().beta;
        for x in [[0.2, 0.3, 0.1, 0.5], [0.75, 0.15, 0.05, 0.05], [0.9, 0.0, 0.1, 0.0]] {
            let mut f = [0.0; 4];
            let mut g = [0.0; 4];
            sivr.drift(&x, &mut f);
            sivr.diffusion(&x, &mut g);
            let total: f64 = x.iter().sum();
            assert!((f.iter().sum::<f64>() - beta * (1.0 - total)).abs() < 1e-14);
            assert!(g.iter().sum::<f64>().abs() < 1e-14);
            assert!(assumption_residual(&sivr, &x).unwrap() < 1e-8);
            let (re, rg) = left_inverse_residual(&sivr, &x);
            assert!(re < 1e-10 && rg < 1e-10);
        }
    }
}
