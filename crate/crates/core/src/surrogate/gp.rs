use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::gram_matrix;
use super::{Dataset, Design, GpHyperparams, Standardization};
use crate::linalg::{cholesky_with_jitter, psd_factor};
use crate::{Error, Result};

/// Posterior mean and standard deviation of the latent function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// Exact GP posterior with a cached Cholesky factor of `K + σ²I`.
///
/// Responses are stored and predicted in raw units; internally the model
/// may work on standardized responses (see [`GpPosterior::fit`]).
/// Immutable once built, so it can be shared across threads.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    hyperparams: GpHyperparams,
    training: Dataset,
    standardization: Standardization,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// Fits on standardized responses; predictions come back in raw units.
    pub fn fit(h: &GpHyperparams, data: &Dataset) -> Result<Self> {
        let s = Standardization::fit(&data.responses());
        Self::fit_with(h, data, s)
    }

    /// Fits on the responses as given.
    pub fn fit_raw(h: &GpHyperparams, data: &Dataset) -> Result<Self> {
        Self::fit_with(h, data, Standardization::IDENTITY)
    }

    pub fn fit_with(h: &GpHyperparams, data: &Dataset, standardization: Standardization) -> Result<Self> {
        h.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = data.dim().unwrap_or(0);
        if dim != h.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), got: dim });
        }
        let xs: Vec<&[f64]> = data.designs().map(|d| d.coords()).collect();
        let mut k = gram_matrix(h, &xs);
        for i in 0..k.nrows() {
            k[(i, i)] += h.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let y = DVector::from_iterator(
            data.len(),
            data.observations().iter().map(|o| standardization.forward(o.response)),
        );
        let alpha = chol.solve(&y);
        Ok(Self { hyperparams: h.clone(), training: data.clone(), standardization, chol, alpha, jitter })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    /// Jitter that had to be added to the Gram diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.dim()
    }

    fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.training.len(),
            self.training.designs().map(|d| self.hyperparams.covariance(d, x)),
        )
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let kx = self.cross_covariance(x);
        let mean = kx.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a nonzero diagonal");
        let var = (self.hyperparams.signal_variance - v.norm_squared()).max(0.0);
        Ok(Prediction {
            mean: self.standardization.inverse(mean),
            sd: self.standardization.scale * var.sqrt(),
        })
    }

    /// Posterior mean only; cheaper than [`GpPosterior::predict`].
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.standardization.inverse(self.cross_covariance(x).dot(&self.alpha)))
    }

    /// Mean vector and a factor of the joint posterior covariance at `xs`,
    /// for repeated draws.
    pub fn joint_sampler(&self, xs: &[Design]) -> Result<JointSampler> {
        for x in xs {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
            }
        }
        // Exact duplicates share one latent coordinate.
        let mut unique: Vec<&[f64]> = Vec::new();
        let mut index = Vec::with_capacity(xs.len());
        for x in xs {
            let pos = unique.iter().position(|u| *u == x.coords());
            index.push(pos.unwrap_or_else(|| {
                unique.push(x.coords());
                unique.len() - 1
            }));
        }
        let n = self.training.len();
        let m = unique.len();
        let mut kx = DMatrix::zeros(n, m);
        for (j, u) in unique.iter().enumerate() {
            kx.set_column(j, &self.cross_covariance(u));
        }
        let mean_std = kx.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a nonzero diagonal");
        let mut cov = gram_matrix(&self.hyperparams, &unique) - v.transpose() * v;
        // symmetrize away rounding
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        let factor = psd_factor(&cov)? * self.standardization.scale;
        let mean = mean_std.iter().map(|z| self.standardization.inverse(*z)).collect();
        Ok(JointSampler { mean, factor, index })
    }

    /// One draw of the latent function jointly at `xs`.
    pub fn sample_joint<R: Rng + ?Sized>(&self, xs: &[Design], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.joint_sampler(xs)?.draw(rng))
    }
}

/// Reusable sampler for the joint posterior at a fixed set of points.
#[derive(Debug, Clone)]
pub struct JointSampler {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
    index: Vec<usize>,
}

impl JointSampler {
    /// Number of requested points (including duplicates).
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Posterior mean at every requested point.
    pub fn mean(&self) -> Vec<f64> {
        self.index.iter().map(|&i| self.mean[i]).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.mean.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut unique = self.mean.clone();
        for (i, u) in unique.iter_mut().enumerate() {
            let row = self.factor.row(i);
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += row[k] * zk;
            }
            *u += s;
        }
        self.index.iter().map(|&i| unique[i]).collect()
    }
}

impl JointSampler {
    /// Draws a full joint sample but only accepts it if the first `prefix`
    /// coordinates satisfy `accept`. Rejected draws skip computing the rest.
    /// Consumes the same randomness as [`JointSampler::draw`].
    pub fn draw_if<R, F>(&self, rng: &mut R, prefix: usize, accept: F) -> Option<Vec<f64>>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64]) -> bool,
    {
        let m = self.mean.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let value = |i: usize| -> f64 {
            let row = self.factor.row(i);
            let mut s = self.mean[i];
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += row[k] * zk;
            }
            s
        };
        let mut unique: Vec<Option<f64>> = vec![None; m];
        let head: Vec<f64> = self.index[..prefix.min(self.index.len())]
            .iter()
            .map(|&i| *unique[i].get_or_insert_with(|| value(i)))
            .collect();
        if !accept(&head) {
            return None;
        }
        Some(self.index.iter().map(|&i| *unique[i].get_or_insert_with(|| value(i))).collect())
    }
}

/// Exact Gaussian log marginal likelihood of the raw responses and its
/// gradient with respect to the log-hyperparameters
/// (`[ln σ_f², ln ℓ_1, …, ln ℓ_d, ln σ²]`).
pub fn log_marginal_likelihood(h: &GpHyperparams, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    h.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = h.dim();
    let dim = data.dim().unwrap_or(0);
    if dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: dim });
    }
    let n = data.len();
    let xs: Vec<&[f64]> = data.designs().map(|x| x.coords()).collect();
    let kf = gram_matrix(h, &xs);
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += h.noise_variance;
    }
    let (chol, _) = cholesky_with_jitter(&k)?;
    let y = DVector::from_vec(data.responses());
    let alpha = chol.solve(&y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // dL/dθ = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = vec![0.0; d + 2];
    for a in 0..n {
        for b in 0..n {
            let wk = w[(a, b)] * kf[(a, b)];
            grad[0] += wk;
            for j in 0..d {
                let r = (xs[a][j] - xs[b][j]) / h.lengthscales[j];
                grad[1 + j] += wk * r * r;
            }
        }
    }
    grad[d + 1] = h.noise_variance * w.trace();
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}
