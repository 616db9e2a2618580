//! Small dense row-major matrix helpers. Dimensions in this crate are tiny
//! (a handful of states), so plain loops over slices are enough.

use alloc::vec;
use alloc::vec::Vec;

/// `out = a * x` for an `rows x cols` matrix `a`.
#[inline]
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// `out += a * x`.
#[inline]
pub fn mat_vec_add(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>();
    }
}

/// `a (r x k) * b (k x c)`.
pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i * c + j] += aip * b[p * c + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Inverse of a square matrix by Gauss–Jordan with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i * n + col]
                .abs()
                .partial_cmp(&m[j * n + col].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })?;
        let pv = m[pivot * n + col];
        if pv == 0.0 || !pv.is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let scale = 1.0 / m[col * n + col];
        for j in 0..n {
            m[col * n + j] *= scale;
            inv[col * n + j] *= scale;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[i * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[i * n + j] -= f * m[col * n + j];
                inv[i * n + j] -= f * inv[col * n + j];
            }
        }
    }
    Some(inv)
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}
