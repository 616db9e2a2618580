//! Reference solutions for the scalar LQG problem.
//!
//! Three references are provided, each answering a different question:
//!
//! - [`riccati_reference_control`]: the optimal feedback `u*(t, x)` of the
//!   LQG problem with control cost `R u^2`, from the scalar Riccati ODE.
//! - [`truncated_reference_control`]: the quantity the path-integral
//!   estimator converges to as the time step vanishes, namely the average of
//!   the optimal control over the truncation window `[0, r]` along the mean of
//!   the optimally controlled path. The path-integral relation
//!   `gamma e R^{-1} e^T = g g^T` corresponds to the control cost
//!   `R u^2 / 2`, so this uses [`RiccatiConvention::PathIntegral`].
//! - [`lqg_discrete_control`]: the exact value of the time-discretized
//!   estimand at a given level, from Gaussian backward recursion.

use super::LqgParams;
use crate::error::{Error, Result};
use alloc::vec::Vec;

/// Which control cost the Riccati equation is written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiConvention {
    /// Control cost `R u^2`: `-p' = 2 A p - p^2 B^2 / R + Q`, `u = -B p x / R`.
    Standard,
    /// Control cost `R u^2 / 2`: the same equations with `R` replaced by `R / 2`.
    PathIntegral,
}

impl RiccatiConvention {
    fn effective_weight(self, r: f64) -> f64 {
        match self {
            RiccatiConvention::Standard => r,
            RiccatiConvention::PathIntegral => 0.5 * r,
        }
    }
}

/// `dp/dtau` with `tau = T - t`.
#[inline]
fn riccati_rhs(p: f64, a: f64, b: f64, q: f64, r: f64) -> f64 {
    2.0 * a * p - p * p * b * b / r + q
}

fn rk4_step(p: f64, dt: f64, a: f64, b: f64, q: f64, r: f64) -> f64 {
    let k1 = riccati_rhs(p, a, b, q, r);
    let k2 = riccati_rhs(p + 0.5 * dt * k1, a, b, q, r);
    let k3 = riccati_rhs(p + 0.5 * dt * k2, a, b, q, r);
    let k4 = riccati_rhs(p + dt * k3, a, b, q, r);
    p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Rate bound used to pick a stable fixed step.
fn stiffness(params: &LqgParams, r: f64) -> f64 {
    let p_ss = libm::sqrt(params.q) * libm::sqrt(r) / params.b.abs() + params.f;
    2.0 * params.a.abs() + 2.0 * p_ss.max(params.f) * params.b * params.b / r + 1.0
}

/// `p(t)` by classical RK4 with `steps` uniform steps backward from `T`.
pub fn riccati_gain(params: &LqgParams, t: f64, convention: RiccatiConvention, steps: usize) -> f64 {
    let r = convention.effective_weight(params.r);
    let span = params.horizon - t;
    let dt = span / steps as f64;
    let mut p = params.f;
    for _ in 0..steps {
        p = rk4_step(p, dt, params.a, params.b, params.q, r);
    }
    p
}

/// `p(t)` by adaptive Dormand–Prince 5(4) with per-step error below `tol`.
pub fn riccati_gain_adaptive(
    params: &LqgParams,
    t: f64,
    convention: RiccatiConvention,
    tol: f64,
) -> f64 {
    let (a, b, q) = (params.a, params.b, params.q);
    let r = convention.effective_weight(params.r);
    let f = |p: f64| riccati_rhs(p, a, b, q, r);
    let span = params.horizon - t;
    let mut tau = 0.0;
    let mut p = params.f;
    let mut dt = (span / 100.0).max(1e-6);
    while tau < span {
        if tau + dt > span {
            dt = span - tau;
        }
        let k1 = f(p);
        let k2 = f(p + dt * (1.0 / 5.0) * k1);
        let k3 = f(p + dt * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = f(p + dt * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
        let k5 = f(p + dt
            * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
                - 212.0 / 729.0 * k4));
        let k6 = f(p + dt
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3
                + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5));
        let p5 = p + dt
            * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4
                - 2187.0 / 6784.0 * k5
                + 11.0 / 84.0 * k6);
        let k7 = f(p5);
        let p4 = p + dt
            * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4
                - 92097.0 / 339200.0 * k5
                + 187.0 / 2100.0 * k6
                + 1.0 / 40.0 * k7);
        let err = (p5 - p4).abs();
        if err <= tol {
            tau += dt;
            p = p5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * libm::pow(tol / err, 0.2)).clamp(0.2, 5.0)
        };
        dt *= factor;
    }
    p
}

fn fixed_steps(params: &LqgParams, r: f64) -> usize {
    let n = libm::ceil(stiffness(params, r) * params.horizon * 400.0) as usize;
    n.max(4096)
}

/// Optimal feedback `u*(t, x) = -B p(t) x / R` of the LQG problem with
/// control cost `R u^2`.
pub fn riccati_reference_control(params: &LqgParams, t: f64, x: f64) -> Result<f64> {
    params.validate()?;
    if !(0.0..=params.horizon).contains(&t) {
        return Err(Error::invalid("t", "must lie in [0, T]"));
    }
    let steps = fixed_steps(params, params.r);
    let p = riccati_gain(params, t, RiccatiConvention::Standard, steps);
    Ok(-params.b * p * x / params.r)
}

/// `r^{-1} int_0^r u*(s, m(s)) ds`, where `m` is the mean of the optimally
/// controlled path started at `x0` and `r = T 2^{-(trunc - 1)}`.
pub fn truncated_reference_control(
    params: &LqgParams,
    trunc: u32,
    convention: RiccatiConvention,
) -> Result<f64> {
    params.validate()?;
    if trunc < 2 {
        return Err(Error::invalid("trunc", "must be at least 2"));
    }
    let r_eff = convention.effective_weight(params.r);
    let window = params.horizon * libm::ldexp(1.0, -(trunc as i32 - 1));
    // grid aligned with the window; backward pass stores p at every half step
    let sub = fixed_steps(params, r_eff).next_power_of_two().max(1 << trunc);
    let dt = params.horizon / sub as f64;
    let half = 0.5 * dt;
    let mut p_half = Vec::with_capacity(2 * sub + 1);
    let mut p = params.f;
    p_half.push(p);
    for _ in 0..2 * sub {
        p = rk4_step(p, half, params.a, params.b, params.q, r_eff);
        p_half.push(p);
    }
    p_half.reverse(); // index j <-> t = j * dt / 2
    let gain = |j: usize| params.b * p_half[j] / r_eff;

    let window_steps = libm::round(window / dt) as usize;
    // state (m, integral of -K m)
    let rhs = |j: usize, m: f64| {
        let k = gain(j);
        ((params.a - params.b * k) * m, -k * m)
    };
    let mut m = params.x0;
    let mut acc = 0.0;
    for s in 0..window_steps {
        let j = 2 * s;
        let (k1m, k1a) = rhs(j, m);
        let (k2m, k2a) = rhs(j + 1, m + half * k1m);
        let (k3m, k3a) = rhs(j + 1, m + half * k2m);
        let (k4m, k4a) = rhs(j + 2, m + dt * k3m);
        m += dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        acc += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
    }
    Ok(acc / window)
}

/// Exact time-discretized estimand at `level` for the scalar LQG problem:
/// `r^{-1} E_pi[sum_{k < r_steps} e^{-1} g W_{k+1}]` under the smoothing
/// distribution of the Euler chain, with `r = T 2^{-(trunc - 1)}`.
///
/// The smoothing distribution is Gaussian, so the backward recursion on the
/// quadratic coefficient of `log E[prod_{j >= k} G_j | Z_k = z]` gives the
/// smoothed transition means in closed form.
pub fn lqg_discrete_control(params: &LqgParams, level: u32, trunc: u32) -> Result<f64> {
    params.validate()?;
    if trunc < 2 || trunc > level {
        return Err(Error::invalid("trunc", "need 2 <= trunc <= level"));
    }
    let gamma = params.r / (params.b * params.b);
    let steps = 1usize << level;
    let h = params.horizon / steps as f64;
    let a = 1.0 + params.a * h;
    // c[k]: log beta_k(z) = -c[k] z^2 + const
    let mut c = alloc::vec![0.0; steps + 1];
    c[steps] = params.f / gamma;
    for k in (1..steps).rev() {
        c[k] = h * params.q / gamma + c[k + 1] * a * a / (1.0 + 2.0 * c[k + 1] * h);
    }
    let r_steps = 1usize << (level - trunc + 1);
    let mut mean = params.x0;
    let mut acc = 0.0;
    for &ck in c.iter().skip(1).take(r_steps) {
        let shrink = 1.0 / (1.0 + 2.0 * h * ck);
        acc += a * mean * (shrink - 1.0);
        mean *= a * shrink;
    }
    let window = params.horizon * libm::ldexp(1.0, -(trunc as i32 - 1));
    Ok(acc / (params.b * window))
}
