//! Building blocks for collaborative and federated black-box optimization.
//!
//! `K` agents, each holding a private heterogeneous objective, run Bayesian
//! optimization loops and exchange only summaries: candidate designs,
//! shared near-optimal designs, densities over optimum locations, random
//! feature weights, or GP hyperparameters. The modules map onto the three
//! federation styles:
//!
//! - [`consensus`]: global decisions mixed by a doubly stochastic matrix.
//! - [`conditioned`]: local decisions conditioned on borrowed designs or
//!   reweighted by shared densities.
//! - [`rff_sharing`]: Thompson sampling over shared random-feature weights.
//! - [`fed`]: federated learning of GP hyperparameters.
//!
//! [`surrogate`] and [`acquisition`] hold the belief and decision machinery
//! every framework consumes, and [`benchmarks`] provides synthetic
//! heterogeneous objective families with known optima.

pub mod acquisition;
pub mod agent;
pub mod benchmarks;
pub mod conditioned;
pub mod consensus;
mod error;
pub mod fed;
pub mod linalg;
pub mod rff_sharing;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
pub use surrogate::{Dataset, Design, Domain, GpHyperparams, GpPosterior, Observation};
