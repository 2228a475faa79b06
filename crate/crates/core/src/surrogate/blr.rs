use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, RffFeatureMap};
use crate::{Error, Result};

/// Weight-space posterior `N(ν, σ²Σ⁻¹)` for `f(x) = φ(x)ᵀw` with prior
/// `w ~ N(0, I)`, where `Σ = ΦᵀΦ + σ²I` and `ν = Σ⁻¹Φᵀy`.
#[derive(Debug, Clone)]
pub struct BlrPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    noise_variance: f64,
    chol: Cholesky<f64, Dyn>,
}

impl BlrPosterior {
    /// Fits from an explicit `t × D` feature matrix.
    pub fn fit_features(features: &DMatrix<f64>, y: &[f64], noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if features.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), got: y.len() });
        }
        let n_features = features.ncols();
        let mut precision = features.transpose() * features;
        for i in 0..n_features {
            precision[(i, i)] += noise_variance;
        }
        let chol = Cholesky::new(precision.clone())
            .ok_or(Error::NotPositiveDefinite { jitter: 0.0, condition: f64::INFINITY })?;
        let rhs = features.transpose() * DVector::from_column_slice(y);
        let mean = chol.solve(&rhs);
        Ok(Self { mean, precision, noise_variance, chol })
    }

    /// Fits on the dataset's responses through the feature map.
    pub fn fit(map: &RffFeatureMap, data: &Dataset, noise_variance: f64) -> Result<Self> {
        let d = map.n_features();
        let mut phi = DMatrix::zeros(data.len(), d);
        for (i, x) in data.designs().enumerate() {
            let row = map.features(x)?;
            for (j, v) in row.into_iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        Self::fit_features(&phi, &data.responses(), noise_variance)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// `σ²Σ⁻¹`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse() * self.noise_variance
    }

    /// `φ(x)ᵀν`.
    pub fn predict_mean(&self, map: &RffFeatureMap, x: &[f64]) -> Result<f64> {
        map.evaluate(self.mean.as_slice(), x)
    }

    /// One Gaussian draw `w = ν + σ L⁻ᵀ z` with `Σ = L Lᵀ`.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.n_features();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a nonzero diagonal");
        let sd = self.noise_variance.sqrt();
        self.mean.iter().zip(u.iter()).map(|(m, v)| m + sd * v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::GpHyperparams;
    use crate::Design;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_data_recovers_prior() {
        let h = GpHyperparams::isotropic(2, 1.0, 0.5, 0.0).unwrap();
        let map = RffFeatureMap::build(1, 8, &h).unwrap();
        let p = BlrPosterior::fit(&map, &Dataset::new(0), 0.3).unwrap();
        assert!(p.mean().iter().all(|v| *v == 0.0));
        let cov = p.covariance();
        assert!((cov - DMatrix::identity(8, 8)).abs().max() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let phi = DMatrix::from_element(1, 1, 1.0);
        let p = BlrPosterior::fit_features(&phi, &[2.0], 1.0).unwrap();
        assert!((p.precision()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((p.mean()[0] - 1.0).abs() < 1e-15);
        assert!((p.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_basis_is_ridge_regression() {
        // category of point i is i % 3
        let y = [1.0, 2.0, -1.0, 3.0, 0.5, 4.0, -2.0];
        let mut phi = DMatrix::zeros(y.len(), 3);
        for i in 0..y.len() {
            phi[(i, i % 3)] = 1.0;
        }
        let lambda = 0.7;
        let p = BlrPosterior::fit_features(&phi, &y, lambda).unwrap();
        for c in 0..3 {
            let members: Vec<f64> = (0..y.len()).filter(|i| i % 3 == c).map(|i| y[i]).collect();
            let ridge = members.iter().sum::<f64>() / (members.len() as f64 + lambda);
            assert!((p.mean()[c] - ridge).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive_noise() {
        let phi = DMatrix::from_element(1, 1, 1.0);
        assert!(BlrPosterior::fit_features(&phi, &[1.0], 0.0).is_err());
    }

    #[test]
    fn weight_draws_match_posterior_moments() {
        let h = GpHyperparams::isotropic(1, 1.0, 0.3, 0.0).unwrap();
        let map = RffFeatureMap::build(4, 3, &h).unwrap();
        let data = Dataset::from_pairs(
            0,
            (0..5).map(|i| (Design::new(vec![i as f64 / 4.0]), (i as f64).sin())),
        )
        .unwrap();
        let p = BlrPosterior::fit(&map, &data, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| p.sample_weights(&mut rng)).collect();
        let cov = p.covariance();
        for j in 0..3 {
            let m = draws.iter().map(|w| w[j]).sum::<f64>() / n as f64;
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!((m - p.mean()[j]).abs() < 4.0 * se);
            let v = draws.iter().map(|w| (w[j] - m).powi(2)).sum::<f64>() / n as f64;
            assert!((v / cov[(j, j)] - 1.0).abs() < 0.05);
        }
    }
}
