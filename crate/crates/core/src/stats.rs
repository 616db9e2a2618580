//! Small sample statistics used by the estimators and the test suites.

use alloc::vec::Vec;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance. Zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// `sqrt(variance / n)`
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    libm::sqrt(variance(xs) / xs.len() as f64)
}

/// Batch-means standard error of the mean of a correlated series, with
/// batch length `floor(sqrt(n))`. Falls back to the i.i.d. formula when
/// there are too few samples for two batches of length two.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    let b = libm::floor(libm::sqrt(n as f64)) as usize;
    if b < 2 || n / b < 2 {
        return std_error(xs);
    }
    let k = n / b;
    let means: Vec<f64> = (0..k).map(|j| mean(&xs[j * b..(j + 1) * b])).collect();
    libm::sqrt(variance(&means) * b as f64 / n as f64)
}

/// Least-squares fit `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `ln sum exp(x_i)`
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + libm::log(xs.iter().map(|x| libm::exp(x - top)).sum::<f64>())
}

/// Self-normalized weights `exp(x_i) / sum_j exp(x_j)`.
pub fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(log_w);
    log_w.iter().map(|x| libm::exp(x - total)).collect()
}
