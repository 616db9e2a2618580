//! Bootstrap particle filters for the single-level and the coupled smoothing
//! models, with log-space normalizing-constant estimates.
//!
//! Brownian increments are drawn from the caller's stream in the order
//! (step, particle, component), which is exactly the order
//! [`simulate_path`](crate::simulate::simulate_path) uses when there is one
//! particle. Resampling draws come from a sibling stream taken at the start
//! of the run, so they never disturb the increment sequence.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::rng::Stream;
use crate::simulate::{CoupledPath, DiscretePath, LevelGrid};
use crate::ssm::{log_potential, softplus};

const RESAMPLE_TAG: u64 = 0x7265_7361_6d70_6c65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Draws `out.len()` ancestor indices from the categorical distribution with
/// probabilities proportional to `weights`.
pub fn resample_into(weights: &[f64], scheme: ResampleScheme, stream: &mut Stream, out: &mut [u32]) -> Result<()> {
    let total = cumulative_total(weights)?;
    let n = out.len();
    match scheme {
        ResampleScheme::Multinomial => {
            let mut cum = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for &w in weights {
                acc += w;
                cum.push(acc);
            }
            let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            for o in out.iter_mut() {
                let target = stream.uniform() * total;
                // first index whose running sum exceeds the target; zero
                // weights never qualify
                let i = cum.partition_point(|&c| c <= target);
                *o = i.min(last_positive) as u32;
            }
        }
        ResampleScheme::Systematic => {
            let u0 = stream.uniform();
            let step = total / n as f64;
            let mut acc = weights[0];
            let mut i = 0;
            for (j, o) in out.iter_mut().enumerate() {
                let target = (j as f64 + u0) * step;
                while target >= acc && i + 1 < weights.len() {
                    i += 1;
                    acc += weights[i];
                }
                // never select a zero-weight tail entry through rounding
                while weights[i] == 0.0 && i > 0 {
                    i -= 1;
                }
                *o = i as u32;
            }
        }
    }
    Ok(())
}

pub fn resample(weights: &[f64], scheme: ResampleScheme, stream: &mut Stream) -> Result<Vec<usize>> {
    let mut out = vec![0u32; weights.len()];
    resample_into(weights, scheme, stream, &mut out)?;
    Ok(out.into_iter().map(|i| i as usize).collect())
}

fn cumulative_total(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid("weights", "must be finite and nonnegative"));
        }
        total += w;
    }
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::AllZeroWeights { step: 0 })
    }
}

/// Turns log-weights into weights scaled so the largest is one, and returns
/// `ln(mean of exp(log_weights))`.
fn normalize(log_weights: &[f64], weights: &mut [f64], step: usize) -> Result<f64> {
    let mut top = f64::NEG_INFINITY;
    for &lw in log_weights {
        if lw.is_nan() {
            return Err(Error::NonFiniteState { step });
        }
        top = top.max(lw);
    }
    if top == f64::NEG_INFINITY {
        return Err(Error::AllZeroWeights { step });
    }
    let mut sum = 0.0;
    for (w, &lw) in weights.iter_mut().zip(log_weights) {
        *w = libm::exp(lw - top);
        sum += *w;
    }
    Ok(top + libm::log(sum / log_weights.len() as f64))
}

fn tag_step(err: Error, step: usize) -> Error {
    match err {
        Error::AllZeroWeights { .. } => Error::AllZeroWeights { step },
        other => other,
    }
}

/// Output of one particle filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct SmcOutput<T> {
    /// The traced trajectory.
    pub trajectory: T,
    /// `ln C`, the log of the product of per-step mean potentials.
    pub log_normalizing_constant: f64,
    /// Particle index `B_k` selected at each step `k = 1..=2^l`.
    pub lineage: Vec<u32>,
}

pub fn run_smc<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    n_particles: usize,
    stream: &mut Stream,
) -> Result<SmcOutput<DiscretePath>> {
    run_smc_with(problem, grid, n_particles, ResampleScheme::Multinomial, stream)
}

/// Bootstrap particle filter for the single-level model: propagate, weight
/// with `G_k`, resample after every interior step, draw the final index with
/// the terminal weights and trace the ancestry back.
pub fn run_smc_with<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    n_particles: usize,
    scheme: ResampleScheme,
    stream: &mut Stream,
) -> Result<SmcOutput<DiscretePath>> {
    if n_particles == 0 {
        return Err(Error::invalid("n_particles", "must be at least 1"));
    }
    let (np, n, d) = (n_particles, problem.state_dim(), problem.noise_dim());
    let steps = grid.steps();
    let h = grid.step_size();
    let sqrt_h = libm::sqrt(h);
    let mut resampler = stream.sibling(RESAMPLE_TAG);

    let mut states = vec![0.0; (steps + 1) * np * n];
    let mut incr = vec![0.0; steps * np * d];
    // anc[(k - 1) * np + i] = A_k^i for interior k
    let mut anc = vec![0u32; steps.saturating_sub(1) * np];
    let mut log_w = vec![0.0; np];
    let mut w = vec![0.0; np];
    let x0 = problem.initial_state();
    for i in 0..np {
        states[i * n..(i + 1) * n].copy_from_slice(x0);
    }

    let mut log_c = 0.0;
    let mut last = 0u32;
    for k in 1..=steps {
        let (done, rest) = states.split_at_mut(k * np * n);
        let prev = &done[(k - 1) * np * n..];
        for i in 0..np {
            let parent = if k == 1 { i } else { anc[(k - 2) * np + i] as usize };
            let wk = &mut incr[((k - 1) * np + i) * d..((k - 1) * np + i + 1) * d];
            for v in wk.iter_mut() {
                *v = sqrt_h * stream.normal();
            }
            let z = &mut rest[i * n..(i + 1) * n];
            problem.euler_step(&prev[parent * n..(parent + 1) * n], wk, h, z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: k });
            }
            log_w[i] = log_potential(problem, &grid, k, z);
        }
        log_c += normalize(&log_w, &mut w, k)?;
        if k < steps {
            resample_into(&w, scheme, &mut resampler, &mut anc[(k - 1) * np..k * np])
                .map_err(|e| tag_step(e, k))?;
        } else {
            let mut one = [0u32];
            resample_into(&w, ResampleScheme::Multinomial, &mut resampler, &mut one)
                .map_err(|e| tag_step(e, k))?;
            last = one[0];
        }
    }

    let mut lineage = vec![0u32; steps];
    lineage[steps - 1] = last;
    for k in (1..steps).rev() {
        lineage[k - 1] = anc[(k - 1) * np + lineage[k] as usize];
    }

    let mut path_states = vec![0.0; (steps + 1) * n];
    let mut path_incr = vec![0.0; steps * d];
    path_states[..n].copy_from_slice(x0);
    for k in 1..=steps {
        let b = lineage[k - 1] as usize;
        path_states[k * n..(k + 1) * n].copy_from_slice(&states[(k * np + b) * n..(k * np + b + 1) * n]);
        path_incr[(k - 1) * d..k * d].copy_from_slice(&incr[((k - 1) * np + b) * d..((k - 1) * np + b + 1) * d]);
    }
    Ok(SmcOutput {
        trajectory: DiscretePath::from_parts(grid, n, d, path_states, path_incr),
        log_normalizing_constant: log_c,
        lineage,
    })
}

pub fn run_coupled_smc<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    n_particles: usize,
    stream: &mut Stream,
) -> Result<SmcOutput<CoupledPath>> {
    run_coupled_smc_with(problem, fine_grid, n_particles, ResampleScheme::Multinomial, stream)
}

/// Particle filter for the coupled model. Fine particles move every fine
/// step; at even steps the coarse particle moves with the sum of the two
/// fine increments of its lineage. Resampling happens at even steps only,
/// and odd steps keep every particle's own index as its ancestor.
///
/// The odd-step potential `G_{k-1} + 1` is carried to the next even step and
/// multiplied into that step's weight, so the resampling weights and `ln C`
/// see the same product of potentials. Averaging the odd and even factors
/// separately would make `C` a biased estimate of the coupled normalizing
/// constant and the PIMH chain would then target the wrong law.
pub fn run_coupled_smc_with<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    n_particles: usize,
    scheme: ResampleScheme,
    stream: &mut Stream,
) -> Result<SmcOutput<CoupledPath>> {
    if n_particles == 0 {
        return Err(Error::invalid("n_particles", "must be at least 1"));
    }
    let coarse_grid = fine_grid.coarser()?;
    let (np, n, d) = (n_particles, problem.state_dim(), problem.noise_dim());
    let steps = fine_grid.steps();
    let half = steps / 2;
    let (h, hc) = (fine_grid.step_size(), coarse_grid.step_size());
    let sqrt_h = libm::sqrt(h);
    let mut resampler = stream.sibling(RESAMPLE_TAG);

    let mut fine = vec![0.0; (steps + 1) * np * n];
    let mut coarse = vec![0.0; (half + 1) * np * n];
    let mut incr = vec![0.0; steps * np * d];
    // anc[(j - 1) * np + i] = A_{2j}^i for interior even steps 2j
    let mut anc = vec![0u32; (half - 1) * np];
    let mut log_w = vec![0.0; np];
    let mut log_odd = vec![0.0; np];
    let mut w = vec![0.0; np];
    let mut wc = vec![0.0; d];
    let x0 = problem.initial_state();
    for i in 0..np {
        fine[i * n..(i + 1) * n].copy_from_slice(x0);
        coarse[i * n..(i + 1) * n].copy_from_slice(x0);
    }
    // A_{k}^i at even k, identity at k = 0
    let even_parent = |anc: &[u32], k: usize, i: usize| -> usize {
        if k == 0 {
            i
        } else {
            anc[(k / 2 - 1) * np + i] as usize
        }
    };

    let mut log_c = 0.0;
    let mut last = 0u32;
    for k in 1..=steps {
        let (done, rest) = fine.split_at_mut(k * np * n);
        let prev = &done[(k - 1) * np * n..];
        for i in 0..np {
            let parent = if k % 2 == 0 { i } else { even_parent(&anc, k - 1, i) };
            let row = ((k - 1) * np + i) * d;
            for v in incr[row..row + d].iter_mut() {
                *v = sqrt_h * stream.normal();
            }
            let z = &mut rest[i * n..(i + 1) * n];
            problem.euler_step(&prev[parent * n..(parent + 1) * n], &incr[row..row + d], h, z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: k });
            }
            let lg = log_potential(problem, &fine_grid, k, z);
            if k % 2 == 1 {
                log_odd[i] = softplus(lg);
            } else {
                let j = k / 2;
                let cparent = even_parent(&anc, k - 2, i);
                let prev_row = ((k - 2) * np + i) * d;
                for c in 0..d {
                    wc[c] = incr[prev_row + c] + incr[row + c];
                }
                let (cdone, crest) = coarse.split_at_mut(j * np * n);
                let zc = &mut crest[i * n..(i + 1) * n];
                problem.euler_step(&cdone[((j - 1) * np + cparent) * n..((j - 1) * np + cparent + 1) * n], &wc, hc, zc);
                if zc.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { step: k });
                }
                log_w[i] = log_odd[i] + lg.max(log_potential(problem, &coarse_grid, j, zc));
            }
        }
        if k % 2 == 0 {
            log_c += normalize(&log_w, &mut w, k)?;
            if k < steps {
                let j = k / 2;
                resample_into(&w, scheme, &mut resampler, &mut anc[(j - 1) * np..j * np])
                    .map_err(|e| tag_step(e, k))?;
            } else {
                let mut one = [0u32];
                resample_into(&w, ResampleScheme::Multinomial, &mut resampler, &mut one)
                    .map_err(|e| tag_step(e, k))?;
                last = one[0];
            }
        }
    }

    let mut lineage = vec![0u32; steps];
    lineage[steps - 1] = last;
    lineage[steps - 2] = last;
    let mut k = steps - 2;
    while k >= 2 {
        let b = anc[(k / 2 - 1) * np + lineage[k + 1] as usize];
        lineage[k - 1] = b;
        lineage[k - 2] = b;
        k -= 2;
    }

    let mut f_states = vec![0.0; (steps + 1) * n];
    let mut f_incr = vec![0.0; steps * d];
    let mut c_states = vec![0.0; (half + 1) * n];
    let mut c_incr = vec![0.0; half * d];
    f_states[..n].copy_from_slice(x0);
    c_states[..n].copy_from_slice(x0);
    for k in 1..=steps {
        let b = lineage[k - 1] as usize;
        f_states[k * n..(k + 1) * n].copy_from_slice(&fine[(k * np + b) * n..(k * np + b + 1) * n]);
        f_incr[(k - 1) * d..k * d].copy_from_slice(&incr[((k - 1) * np + b) * d..((k - 1) * np + b + 1) * d]);
    }
    for j in 1..=half {
        let b = lineage[2 * j - 1] as usize;
        c_states[j * n..(j + 1) * n].copy_from_slice(&coarse[(j * np + b) * n..(j * np + b + 1) * n]);
        for c in 0..d {
            c_incr[(j - 1) * d + c] = f_incr[(2 * j - 2) * d + c] + f_incr[(2 * j - 1) * d + c];
        }
    }
    Ok(SmcOutput {
        trajectory: CoupledPath {
            fine: DiscretePath::from_parts(fine_grid, n, d, f_states, f_incr),
            coarse: DiscretePath::from_parts(coarse_grid, n, d, c_states, c_incr),
        },
        log_normalizing_constant: log_c,
        lineage,
    })
}

/// Plain Monte Carlo estimate of a normalizing constant from i.i.d. samples
/// of its log-integrand: returns `(ln mean, standard error / mean)`.
pub fn log_mean_with_rel_se(log_values: &[f64]) -> (f64, f64) {
    let top = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = log_values.len() as f64;
    let scaled: Vec<f64> = log_values.iter().map(|&v| libm::exp(v - top)).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (top + libm::log(mean), libm::sqrt(var / n) / mean)
}

/// Plain Monte Carlo estimate of `E[G^l]` under the uncontrolled path law.
pub fn normalizing_constant_mc<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: LevelGrid,
    samples: usize,
    stream: &Stream,
) -> Result<(f64, f64)> {
    let mut logs = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut st = stream.derive(s as u64);
        let path = crate::simulate::simulate_path(problem, grid, &mut st)?;
        logs.push(crate::ssm::PotentialTable::new(problem, &path).log_product());
    }
    Ok(log_mean_with_rel_se(&logs))
}

/// Plain Monte Carlo estimate of the coupled normalizing constant, the
/// expectation of the coupled potential product over independently simulated
/// coupled paths. Compare with the particle filter's `ln C`.
pub fn coupled_normalizing_constant_mc<P: ControlProblem + ?Sized>(
    problem: &P,
    fine_grid: LevelGrid,
    samples: usize,
    stream: &Stream,
) -> Result<(f64, f64)> {
    let mut logs = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut st = stream.derive(s as u64);
        let pair = crate::simulate::simulate_coupled(problem, fine_grid, &mut st)?;
        logs.push(crate::ssm::log_coupled_product(problem, &pair)?);
    }
    Ok(log_mean_with_rel_se(&logs))
}
