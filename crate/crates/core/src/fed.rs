//! Federated learning of shared GP hyperparameters.
//!
//! Each round the cloud broadcasts log-hyperparameters, every agent takes a
//! few gradient-ascent steps on its own log marginal likelihood, and the
//! cloud averages the results with weights `p_k`. Only θ vectors travel;
//! the data stays local and personalizes the shared θ at prediction time.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::Streams;
use crate::surrogate::{log_marginal_likelihood, Dataset, GpPosterior, LogHyperparams, Standardization};
use crate::{Error, Result};

/// Box applied to every log-hyperparameter after each step.
pub const LOG_BOUNDS: (f64, f64) = (-14.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "size", rename_all = "snake_case")]
pub enum Minibatch {
    #[default]
    Full,
    /// Random subset of this many observations per step. Its gradients are
    /// biased estimates of the full-batch gradient.
    Subset(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_steps: usize,
    pub step_size: f64,
    /// Aggregation weights `p_k`; defaults to proportional to dataset size.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub minibatch: Minibatch,
    /// Fit each agent's likelihood on its standardized responses.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FedConfig {
    fn default() -> Self {
        Self { rounds: 50, local_steps: 5, step_size: 1e-3, weights: None, minibatch: Minibatch::Full, standardize: true }
    }
}

impl FedConfig {
    pub fn validate(&self, agents: usize) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.minibatch == Minibatch::Subset(0) {
            return Err(Error::InvalidParameter("minibatch size must be at least 1".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != agents {
                return Err(Error::DimensionMismatch { expected: agents, got: w.len() });
            }
            if w.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidParameter("aggregation weights must be nonnegative".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("aggregation weights must sum to 1, got {total}")));
            }
        }
        Ok(())
    }

    pub fn resolved_weights(&self, datasets: &[Dataset]) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| default_weights(datasets))
    }
}

/// `p_k ∝ |D_k|`, uniform when every dataset is empty.
pub fn default_weights(datasets: &[Dataset]) -> Vec<f64> {
    let total: usize = datasets.iter().map(Dataset::len).sum();
    if total == 0 {
        return vec![1.0 / datasets.len().max(1) as f64; datasets.len()];
    }
    datasets.iter().map(|d| d.len() as f64 / total as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedTrace {
    /// Global θ before round 1 and after each round.
    pub thetas: Vec<LogHyperparams>,
    /// `Σ p_k L_k(θ)` at each entry of `thetas`.
    pub objectives: Vec<f64>,
}

impl FedTrace {
    pub fn to_csv(&self) -> String {
        let dim = self.thetas.first().map_or(0, LogHyperparams::dim);
        let mut out = String::from("round,objective");
        for name in LogHyperparams::coordinate_names(dim) {
            out.push(',');
            out.push_str(&name);
        }
        out.push('\n');
        for (r, (theta, obj)) in self.thetas.iter().zip(&self.objectives).enumerate() {
            out.push_str(&format!("{r},{obj}"));
            for v in theta.as_slice() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&LogHyperparams> {
        self.thetas.last()
    }
}

fn prepared(data: &Dataset, standardize: bool) -> Dataset {
    if standardize {
        data.standardized().0
    } else {
        data.clone()
    }
}

fn ascent_step(theta: &mut [f64], data: &Dataset, step_size: f64) -> Result<()> {
    let h = LogHyperparams(theta.to_vec()).to_hyperparams()?;
    let (_, grad) = log_marginal_likelihood(&h, data)?;
    for (t, g) in theta.iter_mut().zip(grad) {
        *t = (*t + step_size * g).clamp(LOG_BOUNDS.0, LOG_BOUNDS.1);
    }
    Ok(())
}

/// `steps` full-batch gradient-ascent iterates on `L(θ; data)`; no-op on an
/// empty dataset. `data` is used as given.
pub fn local_update(theta: &LogHyperparams, data: &Dataset, steps: usize, step_size: f64) -> Result<LogHyperparams> {
    let mut t = theta.0.clone();
    if data.is_empty() {
        return Ok(LogHyperparams(t));
    }
    for _ in 0..steps {
        ascent_step(&mut t, data, step_size)?;
    }
    Ok(LogHyperparams(t))
}

/// Like [`local_update`] with a fresh random subset of `size` observations
/// per step.
pub fn local_update_minibatch<R: Rng + ?Sized>(
    theta: &LogHyperparams,
    data: &Dataset,
    steps: usize,
    step_size: f64,
    size: usize,
    rng: &mut R,
) -> Result<LogHyperparams> {
    if size >= data.len() {
        return local_update(theta, data, steps, step_size);
    }
    let mut t = theta.0.clone();
    for _ in 0..steps {
        let mut idx = sample_indices(rng, data.len(), size).into_vec();
        idx.sort_unstable();
        ascent_step(&mut t, &data.subset(&idx), step_size)?;
    }
    Ok(LogHyperparams(t))
}

/// `Σ_k p_k L_k(θ)`, skipping empty datasets.
pub fn global_objective(theta: &LogHyperparams, datasets: &[Dataset], weights: &[f64], standardize: bool) -> Result<f64> {
    let h = theta.to_hyperparams()?;
    let mut total = 0.0;
    for (d, p) in datasets.iter().zip(weights) {
        if d.is_empty() || *p == 0.0 {
            continue;
        }
        total += p * log_marginal_likelihood(&h, &prepared(d, standardize))?.0;
    }
    Ok(total)
}

/// `Σ_k p_k θ_k` coordinatewise.
pub fn aggregate(updates: &[LogHyperparams], weights: &[f64]) -> Result<LogHyperparams> {
    let first = updates.first().ok_or(Error::EmptyDataset)?;
    let n = first.0.len();
    let mut out = vec![0.0; n];
    for (u, p) in updates.iter().zip(weights) {
        if u.0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.0.len() });
        }
        for (o, v) in out.iter_mut().zip(&u.0) {
            *o += p * v;
        }
    }
    Ok(LogHyperparams(out))
}

/// Broadcasts `theta`, runs each agent's local update in parallel, and
/// returns the aggregate together with the per-agent updates.
pub fn fed_round(
    theta: &LogHyperparams,
    datasets: &[Dataset],
    cfg: &FedConfig,
    streams: &Streams,
    round: usize,
) -> Result<(LogHyperparams, Vec<LogHyperparams>)> {
    cfg.validate(datasets.len())?;
    let weights = cfg.resolved_weights(datasets);
    let updates: Vec<LogHyperparams> = datasets
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let d = prepared(d, cfg.standardize);
            match cfg.minibatch {
                Minibatch::Full => local_update(theta, &d, cfg.local_steps, cfg.step_size),
                Minibatch::Subset(m) => {
                    let mut rng = streams.agent_round("fed_minibatch", k, round);
                    local_update_minibatch(theta, &d, cfg.local_steps, cfg.step_size, m, &mut rng)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok((aggregate(&updates, &weights)?, updates))
}

/// `cfg.rounds` federated rounds from `theta0`.
pub fn run_federated(theta0: &LogHyperparams, datasets: &[Dataset], cfg: &FedConfig, streams: &Streams) -> Result<FedTrace> {
    cfg.validate(datasets.len())?;
    let weights = cfg.resolved_weights(datasets);
    let mut theta = theta0.clone();
    let mut thetas = vec![theta.clone()];
    let mut objectives = vec![global_objective(&theta, datasets, &weights, cfg.standardize)?];
    for r in 0..cfg.rounds {
        theta = fed_round(&theta, datasets, cfg, streams, r)?.0;
        objectives.push(global_objective(&theta, datasets, &weights, cfg.standardize)?);
        thetas.push(theta.clone());
    }
    Ok(FedTrace { thetas, objectives })
}

/// The agent's GP with the shared θ conditioned on its own data.
pub fn personalize(theta: &LogHyperparams, data: &Dataset, standardize: bool) -> Result<GpPosterior> {
    let h = theta.to_hyperparams()?;
    if standardize {
        GpPosterior::fit(&h, data)
    } else {
        GpPosterior::fit_with(&h, data, Standardization::IDENTITY)
    }
}
