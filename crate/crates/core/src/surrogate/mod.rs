//! Belief machinery: exact GP regression, random Fourier features and
//! Bayesian linear regression over those features.

mod blr;
mod data;
mod gp;
mod kernel;
mod rff;

pub use blr::BlrPosterior;
pub use data::{Dataset, Design, Domain, Observation, Standardization};
pub use gp::{GpPosterior, JointSampler, Prediction};
pub use kernel::{gram_matrix, kernel_eval, GpHyperparams, LogHyperparams};
pub use rff::RffFeatureMap;

pub use gp::log_marginal_likelihood;
