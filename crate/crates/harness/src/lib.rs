//! Simulation harness for federated black-box optimization experiments.
//!
//! A run is fully determined by its config and master seed: every random
//! draw comes from a named substream, per-agent work is parallel, and all
//! reductions are ordered by agent id.

pub mod bench;
pub mod config;
mod error;
pub mod events;
pub mod plot;
pub mod replay;
pub mod run;

pub use config::{ExperimentConfig, Framework};
pub use error::{ConfigError, HarnessError};
pub use run::{run_experiment, run_with_threads, RunRecord};
