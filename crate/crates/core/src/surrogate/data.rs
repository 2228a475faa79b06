use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box search region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "bounds for coordinate {j} must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        assert!(dim >= 1, "domain dimension must be at least 1");
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Componentwise projection onto the box.
    pub fn clamp(&self, x: &Design) -> Design {
        Design(
            x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
        )
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Design {
        Design(
            u.iter()
                .enumerate()
                .map(|(j, t)| self.lower[j] + t * self.width(j))
                .collect(),
        )
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Design {
        Design(
            (0..self.dim())
                .map(|j| rng.random_range(self.lower[j]..=self.upper[j]))
                .collect(),
        )
    }

    /// Latin hypercube sample of `n` designs.
    pub fn latin_hypercube<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Design> {
        let d = self.dim();
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut strata: Vec<usize> = (0..n).collect();
            // Fisher-Yates, written out so the draw order is fixed
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                strata.swap(i, j);
            }
            columns.push(
                strata
                    .into_iter()
                    .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
                    .collect(),
            );
        }
        (0..n)
            .map(|i| {
                let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                self.from_unit(&u)
            })
            .collect()
    }

    /// Splits the box into `parts` equal slabs along the first coordinate.
    pub fn partition(&self, parts: usize) -> Vec<Domain> {
        let w = self.width(0) / parts as f64;
        (0..parts)
            .map(|p| {
                let mut lower = self.lower.clone();
                let mut upper = self.upper.clone();
                lower[0] = self.lower[0] + w * p as f64;
                upper[0] = if p + 1 == parts { self.upper[0] } else { self.lower[0] + w * (p + 1) as f64 };
                Domain { lower, upper }
            })
            .collect()
    }
}

/// A point of the search region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Design(Vec<f64>);

impl Design {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance_squared(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl Deref for Design {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Design {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub design: Design,
    pub response: f64,
}

/// Affine map between raw responses and their standardized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub offset: f64,
    pub scale: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self { offset: 0.0, scale: 1.0 };

    /// Zero mean, unit (population) variance. A constant response vector
    /// keeps scale 1.
    pub fn fit(responses: &[f64]) -> Self {
        if responses.is_empty() {
            return Self::IDENTITY;
        }
        let n = responses.len() as f64;
        let mean = responses.iter().sum::<f64>() / n;
        let var = responses.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
        Self { offset: mean, scale }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.offset + self.scale * z
    }
}

/// An agent's private trial history, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    owner: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(owner: usize) -> Self {
        Self { owner, observations: Vec::new() }
    }

    pub fn from_pairs(owner: usize, pairs: impl IntoIterator<Item = (Design, f64)>) -> Result<Self> {
        let mut data = Self::new(owner);
        for (x, y) in pairs {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, design: Design, response: f64) -> Result<()> {
        if !response.is_finite() {
            return Err(Error::NonFiniteResponse(response));
        }
        if let Some(first) = self.observations.first() {
            if first.design.len() != design.len() {
                return Err(Error::DimensionMismatch { expected: first.design.len(), got: design.len() });
            }
        }
        self.observations.push(Observation { design, response });
        Ok(())
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.observations.first().map(|o| o.design.len())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn designs(&self) -> impl Iterator<Item = &Design> {
        self.observations.iter().map(|o| &o.design)
    }

    pub fn responses(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.response).collect()
    }

    pub fn max_response(&self) -> Option<f64> {
        self.observations.iter().map(|o| o.response).reduce(f64::max)
    }

    /// Copy with responses mapped through `s`.
    pub fn transformed(&self, s: Standardization) -> Self {
        Self {
            owner: self.owner,
            observations: self
                .observations
                .iter()
                .map(|o| Observation { design: o.design.clone(), response: s.forward(o.response) })
                .collect(),
        }
    }

    /// Standardized copy plus the map used.
    pub fn standardized(&self) -> (Self, Standardization) {
        let s = Standardization::fit(&self.responses());
        (self.transformed(s), s)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            owner: self.owner,
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
        }
    }
}
