//! Per-agent BO state: private data, hyperparameters and current posterior.

use rand::Rng;

use crate::surrogate::{Dataset, Design, Domain, GpHyperparams, GpPosterior, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    data: Dataset,
    hyperparams: GpHyperparams,
    posterior: Option<GpPosterior>,
    last_fit_error: Option<Error>,
}

impl Agent {
    pub fn new(id: usize, hyperparams: GpHyperparams) -> Self {
        Self { id, data: Dataset::new(id), hyperparams, posterior: None, last_fit_error: None }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn set_hyperparams(&mut self, h: GpHyperparams) {
        self.hyperparams = h;
    }

    pub fn observe(&mut self, obs: Observation) -> Result<()> {
        self.data.push(obs.design, obs.response)
    }

    /// Refits the posterior on all data. On failure the posterior is cleared
    /// and the error kept for reporting.
    pub fn refit(&mut self) -> Option<&GpPosterior> {
        match GpPosterior::fit(&self.hyperparams, &self.data) {
            Ok(p) => {
                self.posterior = Some(p);
                self.last_fit_error = None;
            }
            Err(e) => {
                self.posterior = None;
                self.last_fit_error = Some(e);
            }
        }
        self.posterior.as_ref()
    }

    pub fn set_posterior(&mut self, p: GpPosterior) {
        self.posterior = Some(p);
        self.last_fit_error = None;
    }

    pub fn posterior(&self) -> Option<&GpPosterior> {
        self.posterior.as_ref()
    }

    pub fn last_fit_error(&self) -> Option<&Error> {
        self.last_fit_error.as_ref()
    }

    pub fn incumbent(&self) -> f64 {
        self.data.max_response().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Uniform in-domain design used when an agent has no usable surrogate.
pub fn fallback_design<R: Rng + ?Sized>(dom: &Domain, rng: &mut R) -> Design {
    dom.sample_uniform(rng)
}
