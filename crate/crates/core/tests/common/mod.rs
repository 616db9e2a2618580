//! Reference values computed independently of the library.
#![allow(dead_code)]

use pathctl_core::LqgParams;

/// `u*(0, -0.1)` for the default LQG instance with control cost `R u^2`,
/// from the closed-form Riccati solution, frozen.
pub const RICCATI_CONTROL_AT_START: f64 = 0.23213125016243272;

/// The same with control cost `R u^2 / 2`, frozen.
pub const RICCATI_CONTROL_HALF_COST: f64 = 0.3583191091259259;

/// Riccati gain `p(0)` by RK4 on `dp/dtau = 2 A p - B^2 p^2 / R + Q`.
pub fn riccati_gain_rk4(p: &LqgParams, r_weight: f64, steps: usize) -> f64 {
    let rhs = |v: f64| 2.0 * p.a * v - p.b * p.b * v * v / r_weight + p.q;
    let dt = p.horizon / steps as f64;
    let mut v = p.f;
    for _ in 0..steps {
        let k1 = rhs(v);
        let k2 = rhs(v + 0.5 * dt * k1);
        let k3 = rhs(v + 0.5 * dt * k2);
        let k4 = rhs(v + dt * k3);
        v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    v
}

/// Posterior means of `(z_1..z_n)` under the smoothing density at `level`,
/// from the tridiagonal precision matrix.
pub fn lqg_posterior_means(p: &LqgParams, level: u32) -> Vec<f64> {
    let n = 1usize << level;
    let h = p.horizon / n as f64;
    let gamma = p.r / (p.b * p.b);
    let a = 1.0 + p.a * h;
    let mut diag = vec![0.0; n];
    let off = -a / h;
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        diag[k] = if k + 1 < n {
            (1.0 + a * a) / h + 2.0 * h * p.q / gamma
        } else {
            1.0 / h + 2.0 * p.f / gamma
        };
    }
    rhs[0] = a * p.x0 / h;
    // Thomas algorithm with constant off-diagonal
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let den = diag[k] - off * c[k - 1];
        c[k] = off / den;
        d[k] = (rhs[k] - off * d[k - 1]) / den;
    }
    let mut mean = vec![0.0; n];
    mean[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        mean[k] = d[k] - c[k] * mean[k + 1];
    }
    mean
}

/// Exact time-discretized control at `level`, from the posterior means of
/// the increments over the truncation window.
pub fn lqg_posterior_control(p: &LqgParams, level: u32, trunc: u32) -> f64 {
    let h = p.horizon / (1usize << level) as f64;
    let a = 1.0 + p.a * h;
    let mean = lqg_posterior_means(p, level);
    let r_steps = 1usize << (level - trunc + 1);
    let mut prev = p.x0;
    let mut total = 0.0;
    for &m in mean.iter().take(r_steps) {
        total += m - a * prev;
        prev = m;
    }
    let window = p.horizon / (1u64 << (trunc - 1)) as f64;
    total / (p.b * window)
}

/// `E|Z_T(l) - Z_T(l-1)|^2` for `dZ = A Z dt + dW` under the Euler scheme
/// with the coarse path driven by pairwise-summed increments.
pub fn lqg_coupled_second_moment(p: &LqgParams, level: u32) -> f64 {
    let n_coarse = 1usize << (level - 1);
    let h = p.horizon / (1usize << level) as f64;
    let af = 1.0 + p.a * h;
    let ac = 1.0 + 2.0 * p.a * h;
    let (mut mf, mut mc) = (p.x0, p.x0);
    // covariance of (fine, coarse)
    let (mut vf, mut vc, mut cfc) = (0.0, 0.0, 0.0);
    for _ in 0..n_coarse {
        let (gf, gc) = (af * af, ac);
        vf = gf * gf * vf + (af * af + 1.0) * h;
        vc = gc * gc * vc + 2.0 * h;
        cfc = gf * gc * cfc + (af + 1.0) * h;
        mf *= gf;
        mc *= gc;
    }
    (mf - mc) * (mf - mc) + vf + vc - 2.0 * cfc
}

/// Variance of `Z_T` under the Euler scheme at `level`, started from a point.
pub fn lqg_euler_variance(p: &LqgParams, level: u32) -> f64 {
    let n = 1usize << level;
    let h = p.horizon / n as f64;
    let a = 1.0 + p.a * h;
    (0..n).fold(0.0, |v, _| a * a * v + h)
}

/// Smoothing expectations for the two-step model by tensor trapezoid
/// quadrature over the increments on `[-span, span]^2`. Returns the
/// normalized expectations of each function of `(z_1, z_2, w_1, w_2)`.
pub fn two_step_quadrature(
    drift: f64,
    h: f64,
    log_g1: impl Fn(f64) -> f64,
    log_g2: impl Fn(f64) -> f64,
    funcs: &[&dyn Fn(f64, f64, f64, f64) -> f64],
    x0: f64,
    nodes: usize,
) -> Vec<f64> {
    let sd = h.sqrt();
    let span = 9.0 * sd;
    let dx = 2.0 * span / (nodes - 1) as f64;
    let mut total = 0.0;
    let mut acc = vec![0.0; funcs.len()];
    for i in 0..nodes {
        let w1 = -span + i as f64 * dx;
        let z1 = x0 + drift * x0 * h + w1;
        let wi = if i == 0 || i + 1 == nodes { 0.5 } else { 1.0 };
        for j in 0..nodes {
            let w2 = -span + j as f64 * dx;
            let z2 = z1 + drift * z1 * h + w2;
            let wj = if j == 0 || j + 1 == nodes { 0.5 } else { 1.0 };
            let dens = (-(w1 * w1 + w2 * w2) / (2.0 * h) + log_g1(z1) + log_g2(z2)).exp();
            let weight = wi * wj * dens;
            total += weight;
            for (a, f) in acc.iter_mut().zip(funcs) {
                *a += weight * f(z1, z2, w1, w2);
            }
        }
    }
    acc.iter().map(|a| a / total).collect()
}
