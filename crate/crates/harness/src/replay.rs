//! Replay: recompute regret from logged designs, optionally rerun the whole
//! experiment and compare logs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use fedbbo_core::benchmarks::{make_family, RegretTrace};
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::events::{read_jsonl, Event};
use crate::run::run_experiment;

/// Largest tolerated gap between logged and recomputed values.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub trials: usize,
    pub max_regret_diff: f64,
    pub max_value_diff: f64,
    /// Set when a rerun was requested.
    pub rerun_identical: Option<bool>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.max_regret_diff <= REPLAY_TOL && self.max_value_diff <= REPLAY_TOL && self.rerun_identical != Some(false)
    }
}

#[derive(Deserialize)]
struct StoredRun {
    config: ExperimentConfig,
}

/// Accepts a run directory or a path to its `run.json`.
pub fn locate(path: &Path) -> (PathBuf, PathBuf) {
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    (dir.join("run.json"), dir.join("events.jsonl"))
}

pub fn load_run(path: &Path) -> Result<(ExperimentConfig, Vec<Event>, String), HarnessError> {
    let (run_json, events_path) = locate(path);
    let stored: StoredRun = serde_json::from_str(&fs::read_to_string(&run_json)?)
        .map_err(|e| HarnessError::Replay(format!("{}: {e}", run_json.display())))?;
    let raw = fs::read_to_string(&events_path)?;
    let events = read_jsonl(raw.as_bytes())?;
    Ok((stored.config, events, raw))
}

/// Recomputes noiseless values and simple regret for every logged trial.
pub fn recompute(cfg: &ExperimentConfig, events: &[Event]) -> Result<ReplayReport, HarnessError> {
    let family = make_family(&cfg.family_spec(), cfg.seed)?;
    let mut trace = RegretTrace::for_family(&family);
    let mut report = ReplayReport { trials: 0, max_regret_diff: 0.0, max_value_diff: 0.0, rerun_identical: None };
    for e in events {
        if let Event::Trial { agent, design, true_value, simple_regret, .. } = e {
            if *agent >= cfg.agents || design.len() != cfg.family.dim {
                return Err(HarnessError::Replay(format!("trial for agent {agent} does not fit the config")));
            }
            let f = family.true_value(*agent, design);
            let r = trace.regret_update(*agent, f);
            report.trials += 1;
            report.max_value_diff = report.max_value_diff.max((f - true_value).abs());
            report.max_regret_diff = report.max_regret_diff.max((r - simple_regret).abs());
        }
    }
    Ok(report)
}

pub fn replay(path: &Path, rerun: bool) -> Result<ReplayReport, HarnessError> {
    let (cfg, events, raw) = load_run(path)?;
    let mut report = recompute(&cfg, &events)?;
    if rerun {
        let again = run_experiment(&cfg)?;
        report.rerun_identical = Some(again.events_jsonl() == raw);
    }
    Ok(report)
}
