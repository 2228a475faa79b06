//! Seed-replicated comparison grid: frameworks × heterogeneity levels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fedbbo_core::benchmarks::median;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Framework, SCHEMA_VERSION};
use crate::error::{ConfigError, HarnessError};
use crate::run::run_experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub schema_version: u32,
    pub seeds: usize,
    #[serde(default)]
    pub seed_offset: u64,
    pub frameworks: Vec<Framework>,
    pub heterogeneity: Vec<f64>,
    /// Every grid cell starts from this config.
    pub base: ExperimentConfig,
}

impl BenchSuite {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let s: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, m: &str| ConfigError::Invalid { path: path.into(), message: m.into() };
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", "unsupported version"));
        }
        if self.seeds == 0 {
            return Err(bad("seeds", "must be at least 1"));
        }
        if self.frameworks.is_empty() {
            return Err(bad("frameworks", "must list at least one framework"));
        }
        if self.heterogeneity.is_empty() || self.heterogeneity.iter().any(|h| !(*h >= 0.0)) {
            return Err(bad("heterogeneity", "must list nonnegative levels"));
        }
        for fw in &self.frameworks {
            self.cell(*fw, self.heterogeneity[0], self.seed_offset).validate().map_err(|e| match e {
                ConfigError::Invalid { path, message } => ConfigError::Invalid { path: format!("base.{path}"), message },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn cell(&self, framework: Framework, heterogeneity: f64, seed: u64) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.framework = framework;
        c.family.heterogeneity = heterogeneity;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub framework: Framework,
    pub heterogeneity: f64,
    pub seeds: usize,
    pub median_final_regret: f64,
    pub mean_final_regret: f64,
    pub q25_final_regret: f64,
    pub q75_final_regret: f64,
    pub mean_bytes: f64,
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Runs the grid; per-seed score is the agents' mean final simple regret.
pub fn run_suite(suite: &BenchSuite) -> Result<Vec<BenchRow>, HarnessError> {
    let cells: Vec<(Framework, f64)> =
        suite.frameworks.iter().flat_map(|f| suite.heterogeneity.iter().map(move |h| (*f, *h))).collect();
    cells
        .into_par_iter()
        .map(|(framework, heterogeneity)| {
            let results: Vec<(f64, f64)> = (0..suite.seeds as u64)
                .into_par_iter()
                .map(|s| {
                    let rec = run_experiment(&suite.cell(framework, heterogeneity, suite.seed_offset + s))?;
                    Ok((rec.mean_final_regret(), rec.bytes_per_round().iter().sum::<usize>() as f64))
                })
                .collect::<Result<_, HarnessError>>()?;
            let regrets: Vec<f64> = results.iter().map(|r| r.0).collect();
            Ok(BenchRow {
                framework,
                heterogeneity,
                seeds: suite.seeds,
                median_final_regret: median(&regrets),
                mean_final_regret: regrets.iter().sum::<f64>() / regrets.len() as f64,
                q25_final_regret: quantile(&regrets, 0.25),
                q75_final_regret: quantile(&regrets, 0.75),
                mean_bytes: results.iter().map(|r| r.1).sum::<f64>() / results.len() as f64,
            })
        })
        .collect()
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("framework,heterogeneity,seeds,median_final_regret,mean_final_regret,q25_final_regret,q75_final_regret,mean_bytes\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.framework.name(),
            r.heterogeneity,
            r.seeds,
            r.median_final_regret,
            r.mean_final_regret,
            r.q25_final_regret,
            r.q75_final_regret,
            r.mean_bytes
        );
    }
    out
}

pub fn rows_table(rows: &[BenchRow]) -> String {
    let mut out = String::from("| framework | h | median regret | IQR | mean bytes |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4e} | [{:.3e}, {:.3e}] | {:.0} |",
            r.framework.name(),
            r.heterogeneity,
            r.median_final_regret,
            r.q25_final_regret,
            r.q75_final_regret,
            r.mean_bytes
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.5), 0.5);
    }

    #[test]
    fn suite_parses_and_reports_base_paths() {
        let text = "schema_version = 1\nseeds = 2\nframeworks = [\"independent\", \"consensus\"]\nheterogeneity = [0.0, 0.1]\n[base]\nschema_version = 1\nagents = 2\nrounds = 2\nn_init = 3\n[base.acquisition]\nbudget = 64\n";
        let suite = BenchSuite::from_toml_str(text).unwrap();
        let rows = run_suite(&suite).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows_csv(&rows).lines().count() == 5);
        let bad = text.replace("budget = 64", "budget = 0");
        match BenchSuite::from_toml_str(&bad).unwrap_err() {
            ConfigError::Invalid { path, .. } => assert_eq!(path, "base.acquisition.budget"),
            e => panic!("{e}"),
        }
    }
}
