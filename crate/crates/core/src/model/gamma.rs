use alloc::vec;
use alloc::vec::Vec;

use super::ControlProblem;
use crate::error::{Error, Result};
use crate::linalg;

const GAMMA_RTOL: f64 = 1e-8;

/// `(e R^{-1} e^T, g g^T)` at `x`, both `n x n`.
fn both_sides<P: ControlProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m, d) = (problem.state_dim(), problem.control_dim(), problem.noise_dim());
    let rinv = linalg::invert(problem.control_weight(), m)
        .ok_or_else(|| Error::invalid("control_weight", "matrix is singular"))?;
    let mut e = vec![0.0; n * m];
    let mut g = vec![0.0; n * d];
    problem.control_matrix(x, &mut e);
    problem.diffusion(x, &mut g);
    let ere = linalg::mat_mul(
        &linalg::mat_mul(&e, &rinv, n, m, m),
        &linalg::transpose(&e, n, m),
        n,
        m,
        n,
    );
    let ggt = linalg::mat_mul(&g, &linalg::transpose(&g, n, d), n, d, n);
    Ok((ere, ggt))
}

/// Finds the scalar `gamma` with `gamma e R^{-1} e^T = g g^T` at every probe.
///
/// The problem's own `gamma` is ignored. The value is the least-squares fit
/// over all entries of all probes; every entry must then match to a relative
/// tolerance of 1e-8 (relative to the largest entry of `g g^T` at that probe),
/// otherwise the worst entry is reported.
pub fn resolve_gamma<P: ControlProblem + ?Sized>(problem: &P, probes: &[Vec<f64>]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::invalid("probes", "at least one probe state is required"));
    }
    let mut sides = Vec::with_capacity(probes.len());
    let (mut num, mut den) = (0.0, 0.0);
    for x in probes {
        let (ere, ggt) = both_sides(problem, x)?;
        for (a, b) in ere.iter().zip(&ggt) {
            num += a * b;
            den += a * a;
        }
        sides.push((ere, ggt));
    }
    if den == 0.0 {
        return Err(Error::invalid("control_matrix", "e R^-1 e^T vanishes at every probe"));
    }
    let gamma = num / den;
    let n = problem.state_dim();
    let mut worst: Option<(usize, usize, usize, f64)> = None;
    for (p, (ere, ggt)) in sides.iter().enumerate() {
        let scale = linalg::max_abs(ggt).max(f64::MIN_POSITIVE);
        for (idx, (a, b)) in ere.iter().zip(ggt).enumerate() {
            let rel = (gamma * a - b).abs() / scale;
            if rel > GAMMA_RTOL && worst.map_or(true, |w| rel > w.3) {
                worst = Some((p, idx / n, idx % n, rel));
            }
        }
    }
    match worst {
        Some((probe, row, col, residual)) => Err(Error::NoConsistentGamma {
            probe,
            row,
            col,
            residual,
        }),
        None if gamma > 0.0 && gamma.is_finite() => Ok(gamma),
        None => Err(Error::invalid("gamma", "resolved value is not positive")),
    }
}

/// Max-norm of `gamma e R^{-1} e^T - g g^T` at `x` divided by the max-norm of
/// `g g^T`, using the problem's own `gamma`.
pub fn assumption_residual<P: ControlProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<f64> {
    let (ere, ggt) = both_sides(problem, x)?;
    let gamma = problem.gamma();
    let worst = ere
        .iter()
        .zip(&ggt)
        .fold(0.0f64, |w, (a, b)| w.max((gamma * a - b).abs()));
    Ok(worst / linalg::max_abs(&ggt).max(f64::MIN_POSITIVE))
}

/// Max-norm residuals of `e^{-1} e - I_m` and `g^{-1} g - I_d` at `x`.
pub fn left_inverse_residual<P: ControlProblem + ?Sized>(problem: &P, x: &[f64]) -> (f64, f64) {
    let (n, m, d) = (problem.state_dim(), problem.control_dim(), problem.noise_dim());
    let mut e = vec![0.0; n * m];
    let mut einv = vec![0.0; m * n];
    let mut g = vec![0.0; n * d];
    let mut ginv = vec![0.0; d * n];
    problem.control_matrix(x, &mut e);
    problem.control_left_inverse(x, &mut einv);
    problem.diffusion(x, &mut g);
    problem.diffusion_left_inverse(x, &mut ginv);
    let residual = |prod: Vec<f64>, k: usize| {
        prod.iter()
            .zip(linalg::identity(k))
            .fold(0.0f64, |w, (p, i)| w.max((p - i).abs()))
    };
    (
        residual(linalg::mat_mul(&einv, &e, m, n, m), m),
        residual(linalg::mat_mul(&ginv, &g, d, n, d), d),
    )
}
