//! Experiment configuration (TOML, schema version 1).

use std::fs;
use std::path::{Path, PathBuf};

use fedbbo_core::acquisition::{EtaSchedule, UtilityChoice};
use fedbbo_core::benchmarks::{BaseFunction, FamilySpec};
use fedbbo_core::fed::Minibatch;
use fedbbo_core::rff_sharing::{DpConfig, MixSchedule};
use fedbbo_core::surrogate::GpHyperparams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    #[default]
    Independent,
    Consensus,
    SharedDesigns,
    SharedDensity,
    RffSharing,
    FedSurrogateBo,
}

impl Framework {
    pub const ALL: [Framework; 6] = [
        Framework::Independent,
        Framework::Consensus,
        Framework::SharedDesigns,
        Framework::SharedDensity,
        Framework::RffSharing,
        Framework::FedSurrogateBo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Independent => "independent",
            Framework::Consensus => "consensus",
            Framework::SharedDesigns => "shared_designs",
            Framework::SharedDensity => "shared_density",
            Framework::RffSharing => "rff_sharing",
            Framework::FedSurrogateBo => "fed_surrogate_bo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Each agent gets its own Latin hypercube over the whole box.
    #[default]
    LatinHypercube,
    /// Agent `k` gets a Latin hypercube inside slab `k` of the box.
    Partitioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub base: BaseFunction,
    pub dim: usize,
    pub heterogeneity: f64,
    pub offset_scale: f64,
    pub adversarial: bool,
    pub noise_sd: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { base: BaseFunction::MultiBump, dim: 2, heterogeneity: 0.0, offset_scale: 0.0, adversarial: false, noise_sd: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HyperMode {
    /// Hyperparameters stay at their configured values.
    #[default]
    Fixed,
    /// Each agent runs gradient ascent on its own likelihood every round.
    PerAgentMle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub mode: HyperMode,
    pub signal_variance: f64,
    pub lengthscale: f64,
    /// Per-coordinate lengthscales; overrides `lengthscale`.
    pub lengthscales: Option<Vec<f64>>,
    pub noise_variance: f64,
    pub mle_steps: usize,
    pub mle_step_size: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            mode: HyperMode::Fixed,
            signal_variance: 1.0,
            lengthscale: 0.15,
            lengthscales: None,
            noise_variance: 1e-4,
            mle_steps: 20,
            mle_step_size: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    /// Score evaluations per acquisition search.
    pub budget: usize,
    pub utility: UtilityChoice,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { budget: 1024, utility: UtilityChoice::Improvement }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WKind {
    #[default]
    LinearDecay,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WInitial {
    #[default]
    Uniform,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    pub schedule: WKind,
    pub initial: WInitial,
    /// Explicit `W^(0)`; overrides `initial`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Rounds until the linear decay reaches the identity; defaults to `rounds`.
    pub horizon: Option<usize>,
    pub share_noise_sd: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self { schedule: WKind::LinearDecay, initial: WInitial::Uniform, matrix: None, horizon: None, share_noise_sd: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharedDesignsConfig {
    pub eta: EtaSchedule,
    pub rs_budget: usize,
    pub n_samples: usize,
    pub random_candidates: usize,
    pub local_candidates: usize,
    pub local_scale: f64,
    pub expert_designs: Vec<Vec<f64>>,
    /// One design per line, comma or whitespace separated; `#` starts a comment.
    pub expert_designs_file: Option<PathBuf>,
}

impl Default for SharedDesignsConfig {
    fn default() -> Self {
        Self {
            eta: EtaSchedule::default(),
            rs_budget: 512,
            n_samples: 256,
            random_candidates: 128,
            local_candidates: 32,
            local_scale: 0.05,
            expert_designs: Vec::new(),
            expert_designs_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    /// `N(x⁺, scale² I)` around the sender's LCB maximizer.
    #[default]
    Gaussian,
    /// Kernel density over Thompson-sample maximizers.
    Thompson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharedDensityConfig {
    pub kind: DensityMode,
    pub beta: f64,
    pub eta: EtaSchedule,
    pub scale: f64,
    pub n_draws: usize,
    pub grid_size: usize,
    pub bandwidth: f64,
    pub location_noise_sd: f64,
}

impl Default for SharedDensityConfig {
    fn default() -> Self {
        Self {
            kind: DensityMode::Gaussian,
            beta: 1.0,
            eta: EtaSchedule::default(),
            scale: 0.1,
            n_draws: 32,
            grid_size: 256,
            bandwidth: 0.05,
            location_noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RffConfig {
    pub features: usize,
    /// Seed of the global feature map; defaults to one derived from `seed`.
    pub feature_seed: Option<u64>,
    pub noise_variance: f64,
    /// Defaults to a linear ramp reaching 1 at `rounds`.
    pub schedule: Option<MixSchedule>,
    pub dp: Option<DpConfig>,
}

impl Default for RffConfig {
    fn default() -> Self {
        Self { features: 256, feature_seed: None, noise_variance: 1e-3, schedule: None, dp: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSection {
    pub rounds: usize,
    pub local_steps: usize,
    pub step_size: f64,
    pub weights: Option<Vec<f64>>,
    pub minibatch: Minibatch,
}

impl Default for FedSection {
    fn default() -> Self {
        Self { rounds: 20, local_steps: 5, step_size: 1e-3, weights: None, minibatch: Minibatch::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub framework: Framework,
    pub agents: usize,
    pub rounds: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init_mode: InitMode,
    /// Per-agent trial budgets `T_k ≤ rounds`.
    #[serde(default)]
    pub budgets: Option<Vec<usize>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub shared_designs: SharedDesignsConfig,
    #[serde(default)]
    pub shared_density: SharedDensityConfig,
    #[serde(default)]
    pub rff: RffConfig,
    #[serde(default)]
    pub fed: FedSection,
}

fn default_n_init() -> usize {
    5
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be nonnegative, got {v}")))
    }
}

fn at_least_one(path: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(path, "must be at least 1"))
    }
}

fn check_eta(path: &str, eta: &EtaSchedule) -> Result<(), ConfigError> {
    match *eta {
        EtaSchedule::GpUcb { delta } if !(delta > 0.0 && delta < 1.0) => {
            Err(invalid(&format!("{path}.delta"), format!("must lie in (0, 1), got {delta}")))
        }
        EtaSchedule::Constant { eta } => nonnegative(&format!("{path}.eta"), eta),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Parses, resolves the expert design file relative to the config, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(file) = cfg.shared_designs.expert_designs_file.clone() {
            let file = if file.is_relative() { path.parent().unwrap_or(Path::new(".")).join(file) } else { file };
            cfg = inject_expert_designs(cfg, &file)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> usize {
        self.consensus.horizon.unwrap_or(self.rounds)
    }

    pub fn agent_budget(&self, k: usize) -> usize {
        self.budgets.as_ref().map_or(self.rounds, |b| b[k])
    }

    pub fn family_spec(&self) -> FamilySpec {
        let f = &self.family;
        FamilySpec {
            base: f.base,
            dim: f.dim,
            agents: self.agents,
            heterogeneity: f.heterogeneity,
            offset_scale: f.offset_scale,
            adversarial: f.adversarial,
            noise_sd: f.noise_sd,
        }
    }

    pub fn hyperparams(&self) -> GpHyperparams {
        let s = &self.surrogate;
        let ls = s.lengthscales.clone().unwrap_or_else(|| vec![s.lengthscale; self.family.dim]);
        GpHyperparams { signal_variance: s.signal_variance, lengthscales: ls, noise_variance: s.noise_variance }
    }

    pub fn mix_schedule(&self) -> MixSchedule {
        self.rff.schedule.unwrap_or(MixSchedule::linear(self.rounds.max(1)))
    }

    pub fn feature_seed(&self) -> u64 {
        self.rff.feature_seed.unwrap_or(self.seed ^ 0x5eed_f00d_u64)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Field-path checks run before any work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        at_least_one("agents", self.agents)?;
        at_least_one("rounds", self.rounds)?;
        at_least_one("n_init", self.n_init)?;
        if let Some(b) = &self.budgets {
            if b.len() != self.agents {
                return Err(invalid("budgets", format!("expected {} entries, got {}", self.agents, b.len())));
            }
            if let Some((k, v)) = b.iter().enumerate().find(|(_, v)| **v > self.rounds) {
                return Err(invalid(&format!("budgets[{k}]"), format!("{v} exceeds rounds = {}", self.rounds)));
            }
        }

        let f = &self.family;
        at_least_one("family.dim", f.dim)?;
        nonnegative("family.heterogeneity", f.heterogeneity)?;
        nonnegative("family.offset_scale", f.offset_scale)?;
        nonnegative("family.noise_sd", f.noise_sd)?;

        let s = &self.surrogate;
        positive("surrogate.signal_variance", s.signal_variance)?;
        positive("surrogate.lengthscale", s.lengthscale)?;
        nonnegative("surrogate.noise_variance", s.noise_variance)?;
        positive("surrogate.mle_step_size", s.mle_step_size)?;
        if let Some(ls) = &s.lengthscales {
            if ls.len() != f.dim {
                return Err(invalid("surrogate.lengthscales", format!("expected {} entries, got {}", f.dim, ls.len())));
            }
            for (j, v) in ls.iter().enumerate() {
                positive(&format!("surrogate.lengthscales[{j}]"), *v)?;
            }
        }
        at_least_one("acquisition.budget", self.acquisition.budget)?;
        match self.acquisition.utility {
            UtilityChoice::LcbMaximizer { eta } | UtilityChoice::Ucb { eta } => nonnegative("acquisition.utility.eta", eta)?,
            _ => {}
        }

        match self.framework {
            Framework::Independent => {}
            Framework::Consensus => self.validate_consensus()?,
            Framework::SharedDesigns => self.validate_shared_designs()?,
            Framework::SharedDensity => self.validate_shared_density()?,
            Framework::RffSharing => self.validate_rff()?,
            Framework::FedSurrogateBo => self.validate_fed()?,
        }
        Ok(())
    }

    fn validate_consensus(&self) -> Result<(), ConfigError> {
        let c = &self.consensus;
        nonnegative("consensus.share_noise_sd", c.share_noise_sd)?;
        if c.horizon == Some(0) {
            return Err(invalid("consensus.horizon", "must be at least 1"));
        }
        if let Some(m) = &c.matrix {
            fedbbo_core::consensus::ConsensusMatrix::new(m.clone(), 0)
                .map_err(|e| invalid("consensus.matrix", e.to_string()))?;
            if m.len() != self.agents {
                return Err(invalid("consensus.matrix", format!("expected {0}x{0}, got {1} rows", self.agents, m.len())));
            }
        }
        Ok(())
    }

    fn validate_shared_designs(&self) -> Result<(), ConfigError> {
        let s = &self.shared_designs;
        check_eta("shared_designs.eta", &s.eta)?;
        at_least_one("shared_designs.rs_budget", s.rs_budget)?;
        at_least_one("shared_designs.n_samples", s.n_samples)?;
        nonnegative("shared_designs.local_scale", s.local_scale)?;
        for (i, d) in s.expert_designs.iter().enumerate() {
            if d.len() != self.family.dim {
                return Err(invalid(
                    &format!("shared_designs.expert_designs[{i}]"),
                    format!("expected {} coordinates, got {}", self.family.dim, d.len()),
                ));
            }
            if d.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid(&format!("shared_designs.expert_designs[{i}]"), "lies outside the unit box"));
            }
        }
        Ok(())
    }

    fn validate_shared_density(&self) -> Result<(), ConfigError> {
        let s = &self.shared_density;
        nonnegative("shared_density.beta", s.beta)?;
        check_eta("shared_density.eta", &s.eta)?;
        positive("shared_density.scale", s.scale)?;
        positive("shared_density.bandwidth", s.bandwidth)?;
        nonnegative("shared_density.location_noise_sd", s.location_noise_sd)?;
        at_least_one("shared_density.n_draws", s.n_draws)?;
        at_least_one("shared_density.grid_size", s.grid_size)?;
        Ok(())
    }

    fn validate_rff(&self) -> Result<(), ConfigError> {
        let r = &self.rff;
        at_least_one("rff.features", r.features)?;
        positive("rff.noise_variance", r.noise_variance)?;
        if let Some(s) = &r.schedule {
            s.validate().map_err(|e| invalid("rff.schedule", e.to_string()))?;
        }
        if let Some(dp) = &r.dp {
            dp.validate().map_err(|e| invalid("rff.dp", e.to_string()))?;
        }
        Ok(())
    }

    fn validate_fed(&self) -> Result<(), ConfigError> {
        let f = &self.fed;
        positive("fed.step_size", f.step_size)?;
        if let Some(w) = &f.weights {
            if w.len() != self.agents {
                return Err(invalid("fed.weights", format!("expected {} entries, got {}", self.agents, w.len())));
            }
            if w.iter().any(|p| !(*p >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(invalid("fed.weights", "must be nonnegative and sum to 1"));
            }
        }
        if f.minibatch == Minibatch::Subset(0) {
            return Err(invalid("fed.minibatch.size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Reads designs from `file` and appends them to the expert set.
pub fn inject_expert_designs(mut cfg: ExperimentConfig, file: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(file).map_err(|e| ConfigError::Io(format!("{}: {e}", file.display())))?;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let coords = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid("shared_designs.expert_designs_file", format!("{}:{}: {e}", file.display(), n + 1)))?;
        cfg.shared_designs.expert_designs.push(coords);
    }
    cfg.shared_designs.expert_designs_file = None;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nagents = 2\nrounds = 5\n";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.framework, Framework::Independent);
        assert_eq!(c.n_init, 5);
        assert_eq!(c.shared_designs.rs_budget, 512);
        assert_eq!(c.horizon(), 5);
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = ExperimentConfig::from_toml_str(&format!("{MINIMAL}agnets = 3\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
        let e = ExperimentConfig::from_toml_str(&format!("{MINIMAL}[family]\ndimm = 3\n")).unwrap_err();
        assert!(e.to_string().contains("dimm"));
    }

    #[test]
    fn errors_carry_field_paths() {
        let c = ExperimentConfig::from_toml_str(&format!("{MINIMAL}[family]\nnoise_sd = -1.0\n")).unwrap();
        match c.validate().unwrap_err() {
            ConfigError::Invalid { path, .. } => assert_eq!(path, "family.noise_sd"),
            e => panic!("{e}"),
        }
        let c = ExperimentConfig::from_toml_str(
            "schema_version = 1\nagents = 2\nrounds = 5\nframework = \"rff_sharing\"\n[rff.dp]\nclip_norm = 0.0\nnoise_sd = 1.0\n",
        )
        .unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("rff.dp"));
        let c = ExperimentConfig::from_toml_str("schema_version = 2\nagents = 1\nrounds = 1\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn eta_and_schedule_parse() {
        let c = ExperimentConfig::from_toml_str(&format!(
            "{MINIMAL}framework = \"shared_designs\"\n[shared_designs]\neta = {{ kind = \"constant\", eta = 1e6 }}\n[rff]\nschedule = {{ kind = \"exponential\", rate = 0.2, horizon = 5 }}\n"
        ))
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.shared_designs.eta, EtaSchedule::Constant { eta: 1e6 });
        assert_eq!(c.mix_schedule(), MixSchedule::Exponential { start: 0.0, rate: 0.2, horizon: 5 });
    }
}
