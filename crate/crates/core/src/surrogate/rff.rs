use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::GpHyperparams;
use crate::{Error, Result};

/// Cosine random Fourier features for the ARD squared-exponential kernel:
/// `φ(x) = √(2σ_f²/D) cos(Ωx + b)`.
///
/// Frequencies are drawn from the kernel's spectral density, `Ω_ij ~
/// N(0, 1/ℓ_j²)`, and phases uniformly on `[0, 2π)`. Maps built from the same
/// seed, size and hyperparameters are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct RffFeatureMap {
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    amplitude: f64,
    seed: u64,
}

impl RffFeatureMap {
    pub fn build(seed: u64, n_features: usize, h: &GpHyperparams) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidParameter("random feature count must be at least 1".into()));
        }
        h.validate()?;
        let d = h.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frequencies = DMatrix::zeros(n_features, d);
        for i in 0..n_features {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                frequencies[(i, j)] = z / h.lengthscales[j];
            }
        }
        let phases = (0..n_features)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Ok(Self {
            frequencies,
            phases,
            amplitude: (2.0 * h.signal_variance / n_features as f64).sqrt(),
            seed,
        })
    }

    /// Map with explicit frequencies (`D × d`) and phases.
    pub fn from_parts(frequencies: DMatrix<f64>, phases: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if frequencies.nrows() == 0 || frequencies.nrows() != phases.len() {
            return Err(Error::DimensionMismatch { expected: frequencies.nrows(), got: phases.len() });
        }
        if !(signal_variance > 0.0) {
            return Err(Error::InvalidParameter("signal variance must be positive".into()));
        }
        let n = phases.len() as f64;
        Ok(Self { frequencies, phases, amplitude: (2.0 * signal_variance / n).sqrt(), seed: 0 })
    }

    pub fn n_features(&self) -> usize {
        self.phases.len()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.features_unchecked(x))
    }

    pub(crate) fn features_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|i| {
                let mut arg = self.phases[i];
                for (j, xj) in x.iter().enumerate() {
                    arg += self.frequencies[(i, j)] * xj;
                }
                self.amplitude * arg.cos()
            })
            .collect()
    }

    /// `φ(x)ᵀw`.
    pub fn evaluate(&self, weights: &[f64], x: &[f64]) -> Result<f64> {
        if weights.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: weights.len() });
        }
        Ok(self.features(x)?.iter().zip(weights).map(|(a, b)| a * b).sum())
    }
}
