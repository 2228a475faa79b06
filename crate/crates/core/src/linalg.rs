//! Dense factorization helpers shared by the surrogates.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

/// Diagonal jitter tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Pivots below this fraction of the largest diagonal entry count as a
/// failed factorization.
const PIVOT_FLOOR: f64 = 1e-13;

/// Tolerance for zero pivots in [`psd_factor`], relative to the largest
/// diagonal entry.
const PSD_ZERO_PIVOT: f64 = 1e-12;
const PSD_NEGATIVE_PIVOT: f64 = 1e-8;

/// Cholesky factorization with the jitter ladder applied on failure.
///
/// Returns the factor and the jitter that was finally added to the diagonal.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    let scale = max_diagonal(matrix);
    for &jitter in &JITTER_LADDER {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            let well_posed = (0..n).all(|i| {
                let p = l[(i, i)] * l[(i, i)];
                p.is_finite() && p > PIVOT_FLOOR * scale
            });
            if well_posed {
                return Ok((chol, jitter));
            }
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        condition: condition_estimate(matrix),
    })
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ matrix` for a positive
/// semidefinite matrix.
///
/// Pivots that vanish to rounding level are treated as exact zeros, so
/// rank-deficient covariances (duplicate points, conditioning at training
/// inputs) factor without inflating the variance. A clearly negative pivot
/// triggers the jitter ladder.
pub fn psd_factor(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = max_diagonal(matrix).max(f64::MIN_POSITIVE);
    for &jitter in &JITTER_LADDER {
        if let Some(l) = semidefinite_cholesky(matrix, jitter, scale) {
            return Ok(l);
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        condition: condition_estimate(matrix),
    })
}

fn semidefinite_cholesky(a: &DMatrix<f64>, jitter: f64, scale: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)] + jitter;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !pivot.is_finite() || pivot < -PSD_NEGATIVE_PIVOT * scale {
            return None;
        }
        if pivot <= PSD_ZERO_PIVOT * scale {
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn max_diagonal(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max)
}

/// Ratio of the largest to the smallest absolute eigenvalue.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
