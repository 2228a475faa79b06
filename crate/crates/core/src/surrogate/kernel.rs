use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Design;
use crate::{Error, Result};

/// ARD squared-exponential kernel parameters plus observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let h = Self { signal_variance, lengthscales, noise_variance };
        h.validate()?;
        Ok(h)
    }

    pub fn isotropic(dim: usize, signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidParameter("at least one lengthscale required".into()));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!("lengthscales must be positive, got {l}")));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn to_log(&self) -> LogHyperparams {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        LogHyperparams(v)
    }

    /// Kernel value without the noise term and without dimension checks.
    pub(crate) fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let r = (x - y) / l;
            s += r * r;
        }
        self.signal_variance * (-0.5 * s).exp()
    }
}

/// Hyperparameters in log space: `[ln σ_f², ln ℓ_1, …, ln ℓ_d, ln σ²]`.
///
/// A zero noise variance maps to `-inf` and back to exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogHyperparams(pub Vec<f64>);

impl LogHyperparams {
    pub fn dim(&self) -> usize {
        self.0.len().saturating_sub(2)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_hyperparams(&self) -> Result<GpHyperparams> {
        if self.0.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "log-hyperparameter vector needs at least 3 entries, got {}",
                self.0.len()
            )));
        }
        let n = self.0.len();
        GpHyperparams::new(
            self.0[0].exp(),
            self.0[1..n - 1].iter().map(|v| v.exp()).collect(),
            self.0[n - 1].exp(),
        )
    }

    /// Names of the coordinates, for tabular output.
    pub fn coordinate_names(dim: usize) -> Vec<String> {
        let mut names = vec!["log_signal_variance".to_string()];
        names.extend((0..dim).map(|j| format!("log_lengthscale_{j}")));
        names.push("log_noise_variance".into());
        names
    }
}

/// ARD squared-exponential kernel `σ_f² exp(-½ Σ_j (a_j - b_j)² / ℓ_j²)`.
pub fn kernel_eval(h: &GpHyperparams, a: &Design, b: &Design) -> Result<f64> {
    if a.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: a.len() });
    }
    if b.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: b.len() });
    }
    Ok(h.covariance(a, b))
}

/// Noise-free Gram matrix over `xs`.
pub fn gram_matrix(h: &GpHyperparams, xs: &[&[f64]]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_variance;
        for j in 0..i {
            let v = h.covariance(xs[i], xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}
