//! The experiment loop: initialize, then per round update hyperparameters,
//! refit, decide according to the framework, and evaluate.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use fedbbo_core::acquisition::AcquisitionResult;
use fedbbo_core::agent::{fallback_design, Agent};
use fedbbo_core::benchmarks::{make_family, BlackBoxFamily, RegretTrace};
use fedbbo_core::conditioned::{
    density_weighted_decision, lcb_proposal, local_decision_conditioned, recipient_threshold, thompson_density,
    ConditionedDecisionConfig, DesignSource, RejectionConfig, SharedDensity, SharedDesign, SharedDesignSet,
    TrustedComparator,
};
use fedbbo_core::consensus::{candidate_step, consensus_round, ConsensusMatrix, ConsensusRoundConfig, WSchedule};
use fedbbo_core::fed::{fed_round, global_objective, local_update, FedConfig, FedTrace};
use fedbbo_core::rff_sharing::{dp_average, dp_subset, ts_decision, WeightChoice, WeightMessage};
use fedbbo_core::rng::{Streams, GLOBAL};
use fedbbo_core::surrogate::{BlrPosterior, LogHyperparams, RffFeatureMap};
use fedbbo_core::{Design, Domain, GpPosterior, Observation};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{DensityMode, ExperimentConfig, Framework, HyperMode, InitMode, WInitial, WKind};
use crate::error::HarnessError;
use crate::events::{agent_name, message, Event, PayloadKind, BROADCAST, CLOUD, EXPERT};

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub events: Vec<Event>,
    pub trace: RegretTrace,
    /// `(bo_round, trace)` for the federated framework.
    pub fed_traces: Vec<(usize, FedTrace)>,
    pub wall_clock_secs: f64,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config_hash: &'a str,
    framework: &'a str,
    final_simple_regret: Vec<f64>,
    mean_final_simple_regret: f64,
    total_message_bytes: usize,
    wall_clock_secs: f64,
    config: &'a ExperimentConfig,
}

impl RunRecord {
    pub fn final_regrets(&self) -> Vec<f64> {
        (0..self.trace.agents()).map(|k| self.trace.final_simple(k).unwrap_or(f64::NAN)).collect()
    }

    pub fn mean_final_regret(&self) -> f64 {
        self.trace.mean_final_simple()
    }

    /// Message bytes per round, index 0 being initialization.
    pub fn bytes_per_round(&self) -> Vec<usize> {
        bytes_per_round(&self.events, self.config.rounds)
    }

    pub fn events_jsonl(&self) -> String {
        crate::events::to_jsonl(&self.events)
    }

    pub fn summary_csv(&self) -> String {
        summary_csv(&self.events, self.config.family.dim)
    }

    pub fn fed_trace_csv(&self) -> Option<String> {
        if self.fed_traces.is_empty() {
            return None;
        }
        let mut out = String::new();
        for (i, (bo_round, tr)) in self.fed_traces.iter().enumerate() {
            for (j, line) in tr.to_csv().lines().enumerate() {
                if j == 0 {
                    if i == 0 {
                        let _ = writeln!(out, "bo_round,{line}");
                    }
                    continue;
                }
                let _ = writeln!(out, "{bo_round},{line}");
            }
        }
        Some(out)
    }

    /// Writes `events.jsonl`, `summary.csv`, `run.json` and, when present,
    /// `fed_trace.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("events.jsonl"), self.events_jsonl())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        let summary = RunSummary {
            config_hash: &self.config_hash,
            framework: self.config.framework.name(),
            final_simple_regret: self.final_regrets(),
            mean_final_simple_regret: self.mean_final_regret(),
            total_message_bytes: self.bytes_per_round().iter().sum(),
            wall_clock_secs: self.wall_clock_secs,
            config: &self.config,
        };
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
        if let Some(csv) = self.fed_trace_csv() {
            fs::write(dir.join("fed_trace.csv"), csv)?;
        }
        Ok(())
    }
}

pub fn bytes_per_round(events: &[Event], rounds: usize) -> Vec<usize> {
    let mut out = vec![0; rounds + 1];
    for e in events {
        if let Event::Message { round, bytes, .. } = e {
            if *round < out.len() {
                out[*round] += bytes;
            }
        }
    }
    out
}

pub fn summary_csv(events: &[Event], dim: usize) -> String {
    let mut out = String::from("round,agent");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push_str(",response,true_value,simple_regret,source\n");
    for e in events {
        if let Event::Trial { round, agent, design, response, true_value, simple_regret, source } = e {
            let _ = write!(out, "{round},{agent}");
            for v in design {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{response},{true_value},{simple_regret},{source}");
        }
    }
    out
}

/// Runs on the global rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut sim = Sim::new(cfg)?;
    sim.init()?;
    for t in 1..=cfg.rounds {
        sim.round(t)?;
    }
    Ok(RunRecord {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        events: sim.events,
        trace: sim.trace,
        fed_traces: sim.fed_traces,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<RunRecord, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?;
    pool.install(|| run_experiment(cfg))
}

/// Initial designs for agent `k`; shared with reference implementations.
pub fn initial_designs(cfg: &ExperimentConfig, streams: &Streams, k: usize) -> Vec<Design> {
    let dom = Domain::unit(cfg.family.dim);
    let mut rng = streams.agent_round("init", k, 0);
    match cfg.init_mode {
        InitMode::LatinHypercube => dom.latin_hypercube(cfg.n_init, &mut rng),
        InitMode::Partitioned => dom.partition(cfg.agents)[k].latin_hypercube(cfg.n_init, &mut rng),
    }
}

/// Noisy response for agent `k` at round `t` (`t = 0` is initialization and
/// draws sequentially from one stream).
pub fn noise_stream(streams: &Streams, k: usize, t: usize) -> fedbbo_core::rng::StreamRng {
    streams.agent_round("noise", k, t)
}

struct Decision {
    design: Design,
    source: String,
    notes: Vec<String>,
}

impl Decision {
    fn new(design: Design, source: impl Into<String>) -> Self {
        Self { design, source: source.into(), notes: Vec::new() }
    }
}

struct Sim<'a> {
    cfg: &'a ExperimentConfig,
    family: BlackBoxFamily,
    dom: Domain,
    streams: Streams,
    agents: Vec<Agent>,
    trace: RegretTrace,
    events: Vec<Event>,
    consensus: Option<(WSchedule, ConsensusMatrix)>,
    experts: Vec<Vec<SharedDesign>>,
    map: Option<RffFeatureMap>,
    thetas: Vec<LogHyperparams>,
    global_theta: LogHyperparams,
    fed_traces: Vec<(usize, FedTrace)>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self, HarnessError> {
        let family = make_family(&cfg.family_spec(), cfg.seed)?;
        let dom = family.domain();
        let h = cfg.hyperparams();
        h.validate()?;
        let agents = (0..cfg.agents).map(|k| Agent::new(k, h.clone())).collect();
        let trace = RegretTrace::for_family(&family);
        let consensus = (cfg.framework == Framework::Consensus).then(|| {
            let initial = match (&cfg.consensus.matrix, cfg.consensus.initial) {
                (Some(m), _) => ConsensusMatrix::new(m.clone(), 0).expect("validated"),
                (None, WInitial::Uniform) => ConsensusMatrix::uniform(cfg.agents),
                (None, WInitial::Identity) => ConsensusMatrix::identity(cfg.agents),
            };
            let schedule = match cfg.consensus.schedule {
                WKind::LinearDecay => WSchedule::LinearDecayToIdentity { initial: initial.clone(), horizon: cfg.horizon() },
                WKind::Constant => WSchedule::Constant { initial: initial.clone() },
            };
            (schedule, initial)
        });
        let expert: Vec<SharedDesign> = cfg
            .shared_designs
            .expert_designs
            .iter()
            .map(|d| SharedDesign { design: Design::new(d.clone()), source: DesignSource::Expert })
            .collect();
        let experts = if cfg.framework == Framework::SharedDesigns { vec![expert; cfg.agents] } else { vec![Vec::new(); cfg.agents] };
        let map = if cfg.framework == Framework::RffSharing {
            Some(RffFeatureMap::build(cfg.feature_seed(), cfg.rff.features, &h)?)
        } else {
            None
        };
        let theta = h.to_log();
        Ok(Self {
            cfg,
            family,
            dom,
            streams: Streams::new(cfg.seed),
            agents,
            trace,
            events: Vec::new(),
            consensus,
            experts,
            map,
            thetas: vec![theta.clone(); cfg.agents],
            global_theta: theta,
            fed_traces: Vec::new(),
        })
    }

    fn init(&mut self) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        self.events.push(Event::Header {
            schema_version: cfg.schema_version,
            framework: cfg.framework.name().into(),
            agents: cfg.agents,
            rounds: cfg.rounds,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        });
        for k in 0..cfg.agents {
            let designs = initial_designs(cfg, &self.streams, k);
            let mut noise = noise_stream(&self.streams, k, 0);
            for x in designs {
                self.evaluate(0, k, x, "init", &mut noise)?;
            }
        }
        Ok(())
    }

    fn evaluate<R: Rng + ?Sized>(&mut self, t: usize, k: usize, x: Design, source: &str, noise: &mut R) -> Result<(), HarnessError> {
        let y = self.family.evaluate(k, &x, noise);
        let f = self.family.true_value(k, &x);
        let regret = self.trace.regret_update(k, f);
        self.events.push(Event::Trial {
            round: t,
            agent: k,
            design: x.coords().to_vec(),
            response: y,
            true_value: f,
            simple_regret: regret,
            source: source.into(),
        });
        self.agents[k].observe(Observation { design: x, response: y })?;
        Ok(())
    }

    fn note(&mut self, t: usize, agent: Option<usize>, text: impl Into<String>) {
        self.events.push(Event::Note { round: t, agent, text: text.into() });
    }

    fn msg(&mut self, t: usize, sender: String, recipient: String, kind: PayloadKind, payload: serde_json::Value) {
        self.events.push(message(t, sender, recipient, kind, payload));
    }

    fn round(&mut self, t: usize) -> Result<(), HarnessError> {
        self.update_hyperparams(t)?;
        let decisions = match self.cfg.framework {
            Framework::Consensus => self.consensus_decisions(t)?,
            fw => {
                self.refit_all(t);
                match fw {
                    Framework::Independent | Framework::FedSurrogateBo => self.independent_decisions(t),
                    Framework::SharedDesigns => self.shared_design_decisions(t)?,
                    Framework::SharedDensity => self.density_decisions(t)?,
                    Framework::RffSharing => self.rff_decisions(t)?,
                    Framework::Consensus => unreachable!(),
                }
            }
        };
        for (k, d) in decisions.into_iter().enumerate() {
            for n in d.notes {
                self.note(t, Some(k), n);
            }
            if t <= self.cfg.agent_budget(k) {
                let mut noise = noise_stream(&self.streams, k, t);
                self.evaluate(t, k, d.design, &d.source, &mut noise)?;
            }
        }
        Ok(())
    }

    fn update_hyperparams(&mut self, t: usize) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        if cfg.framework == Framework::FedSurrogateBo {
            return self.federated_hyperparams(t);
        }
        if cfg.surrogate.mode == HyperMode::PerAgentMle {
            let s = &cfg.surrogate;
            let updates: Vec<_> = self
                .agents
                .par_iter()
                .zip(&self.thetas)
                .map(|(a, th)| local_update(th, &a.data().standardized().0, s.mle_steps, s.mle_step_size))
                .collect();
            for (k, u) in updates.into_iter().enumerate() {
                match u.and_then(|th| th.to_hyperparams().map(|h| (th, h))) {
                    Ok((th, h)) => {
                        self.thetas[k] = th;
                        self.agents[k].set_hyperparams(h);
                    }
                    Err(e) => self.note(t, Some(k), format!("hyperparameter update failed: {e}")),
                }
            }
        }
        Ok(())
    }

    fn federated_hyperparams(&mut self, t: usize) -> Result<(), HarnessError> {
        let f = &self.cfg.fed;
        let fc = FedConfig {
            rounds: f.rounds,
            local_steps: f.local_steps,
            step_size: f.step_size,
            weights: f.weights.clone(),
            minibatch: f.minibatch,
            standardize: true,
        };
        let datasets: Vec<_> = self.agents.iter().map(|a| a.data().clone()).collect();
        let weights = fc.resolved_weights(&datasets);
        let sub = Streams::new(self.streams.stream("fed", GLOBAL, t as u64).random());
        let mut theta = self.global_theta.clone();
        let mut thetas = vec![theta.clone()];
        let mut objectives = vec![global_objective(&theta, &datasets, &weights, true)?];
        for r in 0..fc.rounds {
            self.msg(t, CLOUD.into(), BROADCAST.into(), PayloadKind::Theta, json!(theta.as_slice()));
            let (g, ups) = fed_round(&theta, &datasets, &fc, &sub, r)?;
            for (k, u) in ups.iter().enumerate() {
                self.msg(t, agent_name(k), CLOUD.into(), PayloadKind::Theta, json!(u.as_slice()));
            }
            theta = g;
            objectives.push(global_objective(&theta, &datasets, &weights, true)?);
            thetas.push(theta.clone());
        }
        self.msg(t, CLOUD.into(), BROADCAST.into(), PayloadKind::Theta, json!(theta.as_slice()));
        let h = theta.to_hyperparams()?;
        for a in &mut self.agents {
            a.set_hyperparams(h.clone());
        }
        self.global_theta = theta;
        self.fed_traces.push((t, FedTrace { thetas, objectives }));
        Ok(())
    }

    fn refit_all(&mut self, t: usize) {
        self.agents.par_iter_mut().for_each(|a| {
            a.refit();
        });
        let failed: Vec<(usize, String)> = self
            .agents
            .iter()
            .filter(|a| a.posterior().is_none())
            .map(|a| (a.id(), a.last_fit_error().map_or_else(String::new, |e| e.to_string())))
            .collect();
        for (k, e) in failed {
            self.note(t, Some(k), format!("surrogate fit failed, using a random design: {e}"));
        }
    }

    fn fallback(&self, k: usize, t: usize) -> Decision {
        Decision::new(fallback_design(&self.dom, &mut self.streams.agent_round("fallback", k, t)), "fallback")
    }

    fn plain(&self, p: &GpPosterior, k: usize, t: usize) -> AcquisitionResult {
        let mut rng = self.streams.agent_round("decision", k, t);
        candidate_step(p, self.cfg.acquisition.utility, &self.dom, self.cfg.acquisition.budget, &mut rng)
    }

    fn independent_decisions(&self, t: usize) -> Vec<Decision> {
        (0..self.cfg.agents)
            .into_par_iter()
            .map(|k| match self.agents[k].posterior() {
                Some(p) => Decision::new(self.plain(p, k, t).design, "plain"),
                None => self.fallback(k, t),
            })
            .collect()
    }

    fn consensus_decisions(&mut self, t: usize) -> Result<Vec<Decision>, HarnessError> {
        let (schedule, mut w) = self.consensus.take().expect("consensus state");
        let rc = ConsensusRoundConfig {
            utility: self.cfg.acquisition.utility,
            budget: self.cfg.acquisition.budget,
            share_noise_sd: self.cfg.consensus.share_noise_sd,
        };
        let trials = vec![None; self.cfg.agents];
        let r = consensus_round(&mut self.agents, trials, &mut w, &schedule, &self.dom, &rc, &self.streams, t)?;
        if w.is_clamped() {
            self.note(t, None, "consensus matrix entries were clamped to [0, 1]");
        }
        self.consensus = Some((schedule, w));
        for (k, x) in r.shared.0.iter().enumerate() {
            self.msg(t, agent_name(k), CLOUD.into(), PayloadKind::CandidateDesign, json!(x.coords()));
        }
        for (k, x) in r.decisions.iter().enumerate() {
            self.msg(t, CLOUD.into(), agent_name(k), PayloadKind::CandidateDesign, json!(x.coords()));
        }
        Ok(r
            .decisions
            .into_iter()
            .enumerate()
            .map(|(k, x)| {
                let mut d = Decision::new(x, if r.fallbacks.contains(&k) { "fallback" } else { "consensus" });
                if r.fallbacks.contains(&k) {
                    d.notes.push("surrogate fit failed, proposed a random candidate".into());
                }
                d
            })
            .collect())
    }

    fn shared_design_decisions(&mut self, t: usize) -> Result<Vec<Decision>, HarnessError> {
        let cfg = self.cfg;
        let sd = &cfg.shared_designs;
        let kk = cfg.agents;
        let budget = cfg.acquisition.budget;
        let eta = sd.eta.eta(cfg.family.dim, t);
        let grid = self.streams.stream("grid", GLOBAL, t as u64);
        let (proposals, deltas): (Vec<_>, Vec<_>) = (0..kk)
            .into_par_iter()
            .map(|k| match self.agents[k].posterior() {
                Some(p) if kk > 1 => (
                    Some(lcb_proposal(p, k, eta, &self.dom, budget, &mut grid.clone())),
                    Some(recipient_threshold(p, &self.dom, budget, &mut grid.clone())),
                ),
                _ => (None, None),
            })
            .unzip();

        let mut sets = Vec::with_capacity(kk);
        for k in 0..kk {
            let Some(delta) = deltas[k] else {
                sets.push(None);
                continue;
            };
            let mut set = SharedDesignSet::new(k, delta)?;
            for (j, prop) in proposals.iter().enumerate() {
                let Some(prop) = prop.as_ref().filter(|_| j != k) else { continue };
                let shared = prop.offer(delta, &TrustedComparator);
                self.msg(t, agent_name(j), agent_name(k), PayloadKind::ComparatorBool, json!({ "greater": shared.is_some() }));
                if let Some(s) = shared {
                    self.msg(t, agent_name(j), agent_name(k), PayloadKind::SharedDesign, json!(s.design.coords()));
                    set.items.push(s);
                }
            }
            for e in self.experts[k].clone() {
                self.msg(t, EXPERT.into(), agent_name(k), PayloadKind::SharedDesign, json!(e.design.coords()));
            }
            set.items.extend(self.experts[k].iter().cloned());
            sets.push(Some(set));
        }

        let dc = ConditionedDecisionConfig {
            utility: cfg.acquisition.utility,
            budget,
            rejection: RejectionConfig { n_samples: sd.n_samples, rs_budget: sd.rs_budget },
            random_candidates: sd.random_candidates,
            local_candidates: sd.local_candidates,
            local_scale: sd.local_scale,
        };
        let outcomes: Vec<Result<(Decision, Vec<SharedDesign>), HarnessError>> = (0..kk)
            .into_par_iter()
            .map(|k| {
                let Some(p) = self.agents[k].posterior() else { return Ok((self.fallback(k, t), Vec::new())) };
                let set = match &sets[k] {
                    Some(s) => s.clone(),
                    None => SharedDesignSet::new(k, p.training().max_response().unwrap_or(0.0))?,
                };
                let mut plain_rng = self.streams.agent_round("decision", k, t);
                let mut mc_rng = self.streams.agent_round("rs", k, t);
                let r = local_decision_conditioned(p, &set, &self.dom, &dc, &mut plain_rng, &mut mc_rng)?;
                let mut d = Decision::new(r.design.clone(), if r.used_plain() { "plain" } else { "conditioned" });
                let mut discarded = Vec::new();
                if let Some(s) = &r.surrogate {
                    if !s.discarded().is_empty() {
                        d.notes.push(format!(
                            "{} of {} borrowed designs discarded",
                            s.discarded().len(),
                            s.constraints().items.len()
                        ));
                    }
                    discarded = s.discarded().to_vec();
                }
                Ok((d, discarded))
            })
            .collect();
        let mut decisions = Vec::with_capacity(kk);
        for (k, o) in outcomes.into_iter().enumerate() {
            let (d, discarded) = o?;
            self.experts[k].retain(|e| !discarded.contains(e));
            decisions.push(d);
        }
        Ok(decisions)
    }

    fn density_decisions(&mut self, t: usize) -> Result<Vec<Decision>, HarnessError> {
        let cfg = self.cfg;
        let sc = &cfg.shared_density;
        let kk = cfg.agents;
        let budget = cfg.acquisition.budget;
        let eta = sc.eta.eta(cfg.family.dim, t);
        let grid = self.streams.stream("grid", GLOBAL, t as u64);
        let densities: Vec<Option<SharedDensity>> = (0..kk)
            .into_par_iter()
            .map(|k| -> Result<Option<SharedDensity>, HarnessError> {
                let Some(p) = self.agents[k].posterior().filter(|_| kk > 1) else { return Ok(None) };
                Ok(Some(match sc.kind {
                    DensityMode::Gaussian => {
                        let mut center = lcb_proposal(p, k, eta, &self.dom, budget, &mut grid.clone()).design;
                        if sc.location_noise_sd > 0.0 {
                            let mut r = self.streams.agent_round("density_noise", k, t);
                            let moved: Vec<f64> = center.iter().map(|x| x + sc.location_noise_sd * r.sample::<f64, _>(StandardNormal)).collect();
                            center = self.dom.clamp(&Design::new(moved));
                        }
                        SharedDensity::gaussian(center, sc.scale, k)?
                    }
                    DensityMode::Thompson => {
                        let mut r = self.streams.agent_round("ts_density", k, t);
                        thompson_density(p, k, sc.n_draws, &self.dom, sc.grid_size, sc.bandwidth, sc.location_noise_sd, &mut r)?
                    }
                }))
            })
            .collect::<Result<_, _>>()?;
        for (k, d) in densities.iter().enumerate() {
            if let Some(d) = d {
                self.msg(t, agent_name(k), BROADCAST.into(), PayloadKind::Density, serde_json::to_value(d).expect("density serializes"));
            }
        }
        (0..kk)
            .into_par_iter()
            .map(|k| {
                let Some(p) = self.agents[k].posterior() else { return Ok(self.fallback(k, t)) };
                let others: Vec<SharedDensity> =
                    densities.iter().enumerate().filter(|(j, _)| *j != k).filter_map(|(_, d)| d.clone()).collect();
                let mut rng = self.streams.agent_round("decision", k, t);
                let r = density_weighted_decision(p, &others, sc.beta, cfg.rounds, cfg.acquisition.utility, &self.dom, budget, &mut rng)?;
                Ok(Decision::new(r.design, if others.is_empty() || sc.beta == 0.0 { "plain" } else { "density_weighted" }))
            })
            .collect()
    }

    fn rff_decisions(&mut self, t: usize) -> Result<Vec<Decision>, HarnessError> {
        let cfg = self.cfg;
        let kk = cfg.agents;
        let map = self.map.clone().expect("feature map");
        let map = &map;
        let blrs: Vec<Option<BlrPosterior>> = self
            .agents
            .par_iter()
            .map(|a| BlrPosterior::fit(map, a.data(), cfg.rff.noise_variance).ok())
            .collect();
        let shared: Vec<Option<WeightMessage>> = blrs
            .par_iter()
            .enumerate()
            .map(|(k, b)| {
                b.as_ref().filter(|_| kk > 1).map(|b| {
                    let w = b.sample_weights(&mut self.streams.agent_round("share_weights", k, t));
                    WeightMessage::new(w, Some(k), t).expect("posterior draws are finite")
                })
            })
            .collect();
        let dest = if cfg.rff.dp.is_some() { CLOUD } else { BROADCAST };
        for m in shared.iter().flatten() {
            let k = m.source.expect("agent message");
            self.msg(t, agent_name(k), dest.into(), PayloadKind::Weights, json!(m.weights));
        }
        let mut peer_sets: Vec<(Vec<WeightMessage>, Vec<String>)> = Vec::with_capacity(kk);
        for k in 0..kk {
            let others: Vec<&WeightMessage> = shared.iter().enumerate().filter(|(j, _)| *j != k).filter_map(|(_, m)| m.as_ref()).collect();
            match &cfg.rff.dp {
                Some(dp) if !others.is_empty() => {
                    let idx = dp_subset(others.len(), dp, &mut self.streams.agent_round("dp_subset", k, t));
                    let picked: Vec<WeightMessage> = idx.iter().map(|&i| others[i].clone()).collect();
                    let avg = dp_average(&picked, dp, t, &mut self.streams.agent_round("dp_noise", k, t))?;
                    self.msg(t, CLOUD.into(), agent_name(k), PayloadKind::Weights, json!(avg.weights));
                    peer_sets.push((vec![avg], vec!["cloud".into()]));
                }
                _ => {
                    let labels = others.iter().map(|m| format!("agent:{}", m.source.expect("agent message"))).collect();
                    peer_sets.push((others.into_iter().cloned().collect(), labels));
                }
            }
        }
        let p_t = cfg.mix_schedule().eval(t);
        let budget = cfg.acquisition.budget;
        (0..kk)
            .into_par_iter()
            .map(|k| {
                let Some(own) = &blrs[k] else { return Ok(self.fallback(k, t)) };
                let (peers, labels) = &peer_sets[k];
                let mut choice_rng = self.streams.agent_round("ts_choice", k, t);
                let mut rng = self.streams.agent_round("decision", k, t);
                let r = ts_decision(own, peers, map, p_t, t, &self.dom, budget, &mut choice_rng, &mut rng)?;
                let source = match r.choice {
                    WeightChoice::Own => "own".to_string(),
                    WeightChoice::ForcedOwn => "forced_own".to_string(),
                    WeightChoice::Peer(i) => format!("peer:{}", labels[i]),
                };
                let mut d = Decision::new(r.design, source);
                if r.choice == WeightChoice::ForcedOwn && kk > 1 {
                    d.notes.push("no peer weights available, using own".into());
                }
                if let Some(s) = r.staleness.filter(|s| *s > 0) {
                    d.notes.push(format!("peer weights are {s} rounds old"));
                }
                Ok(d)
            })
            .collect()
    }
}
