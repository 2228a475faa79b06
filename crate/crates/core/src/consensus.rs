//! Global decisions: agents propose their own expected-utility maximizers and
//! a coordinator mixes them with a time-varying doubly stochastic matrix,
//! `x_k^new = Σ_j w_kj x_j^c`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition, AcquisitionResult, UtilityChoice};
use crate::agent::{fallback_design, Agent};
use crate::rng::Streams;
use crate::surrogate::{Design, Domain, GpPosterior, Observation};
use crate::{Error, Result};

/// Tolerance for symmetry and unit row/column sums.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Clamp adjustments at or below this size are rounding, not clamping.
const ROUNDING_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMatrix {
    weights: Vec<Vec<f64>>,
    time: usize,
    /// Set once a linear-decay step had to clamp an entry into `[0, 1]`;
    /// such matrices are no longer required to be doubly stochastic.
    clamped: bool,
}

impl ConsensusMatrix {
    pub fn new(weights: Vec<Vec<f64>>, time: usize) -> Result<Self> {
        let m = Self { weights, time, clamped: false };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![vec![1.0 / k as f64; k]; k], time: 0, clamped: false }
    }

    pub fn identity(k: usize) -> Self {
        let weights = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self { weights, time: 0, clamped: false }
    }

    pub fn agents(&self) -> usize {
        self.weights.len()
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    pub fn weight(&self, k: usize, j: usize) -> f64 {
        self.weights[k][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.weights.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.agents()).map(|j| self.weights.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.agents();
        if k == 0 {
            return Err(Error::InvalidConsensusMatrix("no agents".into()));
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidConsensusMatrix(format!("row {i} has {} entries, expected {k}", row.len())));
            }
            for (j, &w) in row.iter().enumerate() {
                if !(w >= -STOCHASTIC_TOL && w <= 1.0 + STOCHASTIC_TOL) {
                    return Err(Error::InvalidConsensusMatrix(format!("entry ({i},{j}) = {w} outside [0, 1]")));
                }
                if (w - self.weights[j][i]).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidConsensusMatrix(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        if !self.clamped {
            for (i, s) in self.row_sums().into_iter().enumerate() {
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidConsensusMatrix(format!("row {i} sums to {s}")));
                }
            }
            for (j, s) in self.column_sums().into_iter().enumerate() {
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidConsensusMatrix(format!("column {j} sums to {s}")));
                }
            }
        }
        Ok(())
    }
}

/// Per-agent candidate designs, ordered by agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet(pub Vec<Design>);

/// One linear-decay step toward the identity: diagonal entries gain
/// `(K-1)/(TK)`, off-diagonal entries lose `1/(TK)`, and any entry leaving
/// `[0, 1]` is clamped (never renormalized).
pub fn w_update_linear(w: &ConsensusMatrix, horizon: usize) -> ConsensusMatrix {
    let k = w.agents();
    let tk = (horizon.max(1) * k) as f64;
    let up = (k as f64 - 1.0) / tk;
    let down = 1.0 / tk;
    let mut clamped = w.clamped;
    let weights = w
        .weights
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let raw = if i == j { v + up } else { v - down };
                    let c = raw.clamp(0.0, 1.0);
                    if (c - raw).abs() > ROUNDING_CLAMP {
                        clamped = true;
                    }
                    c
                })
                .collect()
        })
        .collect();
    ConsensusMatrix { weights, time: w.time + 1, clamped }
}

pub type CustomStep = Arc<dyn Fn(&ConsensusMatrix) -> ConsensusMatrix + Send + Sync>;

/// How the mixing matrix evolves between rounds.
#[derive(Clone)]
pub enum WSchedule {
    LinearDecayToIdentity { initial: ConsensusMatrix, horizon: usize },
    Constant { initial: ConsensusMatrix },
    /// User-supplied update, e.g. leader-weighted mixing.
    Custom { initial: ConsensusMatrix, step: CustomStep },
}

impl fmt::Debug for WSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WSchedule::LinearDecayToIdentity { initial, horizon } => f
                .debug_struct("LinearDecayToIdentity")
                .field("initial", initial)
                .field("horizon", horizon)
                .finish(),
            WSchedule::Constant { initial } => f.debug_struct("Constant").field("initial", initial).finish(),
            WSchedule::Custom { initial, .. } => f.debug_struct("Custom").field("initial", initial).finish_non_exhaustive(),
        }
    }
}

impl WSchedule {
    pub fn initial(&self) -> &ConsensusMatrix {
        match self {
            WSchedule::LinearDecayToIdentity { initial, .. }
            | WSchedule::Constant { initial }
            | WSchedule::Custom { initial, .. } => initial,
        }
    }

    /// Next matrix; errors if it breaks the consensus-matrix invariants.
    pub fn advance(&self, w: &ConsensusMatrix) -> Result<ConsensusMatrix> {
        let next = match self {
            WSchedule::LinearDecayToIdentity { horizon, .. } => w_update_linear(w, *horizon),
            WSchedule::Constant { .. } => ConsensusMatrix { time: w.time + 1, ..w.clone() },
            WSchedule::Custom { step, .. } => {
                let mut m = step(w);
                m.time = w.time + 1;
                m
            }
        };
        next.validate()?;
        Ok(next)
    }

    /// `W^(t)`: the initial matrix advanced `t` times.
    pub fn matrix_at(&self, t: usize) -> Result<ConsensusMatrix> {
        let mut w = self.initial().clone();
        for _ in 0..t {
            w = self.advance(&w)?;
        }
        Ok(w)
    }
}

/// Agent `k` receives `Σ_j w_kj x_j`, projected onto the box.
pub fn consensus_mix(w: &ConsensusMatrix, candidates: &CandidateSet, dom: &Domain) -> Result<Vec<Design>> {
    w.validate()?;
    let k = w.agents();
    if candidates.0.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: candidates.0.len() });
    }
    for c in &candidates.0 {
        dom.check(c)?;
    }
    let d = dom.dim();
    Ok((0..k)
        .map(|i| {
            let mut acc = vec![0.0; d];
            for (j, c) in candidates.0.iter().enumerate() {
                let wij = w.weight(i, j);
                for (a, x) in acc.iter_mut().zip(c.iter()) {
                    *a += wij * x;
                }
            }
            dom.clamp(&Design::new(acc))
        })
        .collect())
}

/// An agent's own expected-utility maximizer.
pub fn candidate_step<R: Rng + ?Sized>(
    posterior: &GpPosterior,
    utility: UtilityChoice,
    dom: &Domain,
    budget: usize,
    rng: &mut R,
) -> AcquisitionResult {
    let u = utility.for_posterior(posterior);
    maximize_acquisition(|x| u.expected(posterior, x).unwrap_or(f64::NEG_INFINITY), dom, budget, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusRoundConfig {
    pub utility: UtilityChoice,
    pub budget: usize,
    /// Standard deviation of Gaussian noise added to shared candidates.
    pub share_noise_sd: f64,
}

#[derive(Debug, Clone)]
pub struct ConsensusRound {
    /// Each agent's own maximizer.
    pub candidates: CandidateSet,
    /// What each agent sent to the coordinator (candidates plus any noise).
    pub shared: CandidateSet,
    /// The matrix used for this round's mix.
    pub weights: ConsensusMatrix,
    /// Designs each agent evaluates next.
    pub decisions: Vec<Design>,
    /// Agents whose surrogate failed and who proposed a random design.
    pub fallbacks: Vec<usize>,
}

/// One round of the consensus loop: record the previous trials, refit the
/// posteriors, find each agent's candidate, advance `W` and mix.
///
/// Per-agent work runs in parallel; every random draw comes from a stream
/// keyed by agent and round, so the result does not depend on scheduling.
pub fn consensus_round(
    agents: &mut [Agent],
    trials: Vec<Option<Observation>>,
    w: &mut ConsensusMatrix,
    schedule: &WSchedule,
    dom: &Domain,
    cfg: &ConsensusRoundConfig,
    streams: &Streams,
    round: usize,
) -> Result<ConsensusRound> {
    if trials.len() != agents.len() {
        return Err(Error::DimensionMismatch { expected: agents.len(), got: trials.len() });
    }
    // Trial
    for (agent, obs) in agents.iter_mut().zip(trials) {
        if let Some(obs) = obs {
            agent.observe(obs)?;
        }
    }
    // Posterior update and Optimize
    let proposals: Vec<(Design, Design, bool)> = agents
        .par_iter_mut()
        .map(|agent| {
            let k = agent.id();
            let (candidate, fallback) = match agent.refit() {
                Some(p) => {
                    let mut rng = streams.agent_round("decision", k, round);
                    (candidate_step(p, cfg.utility, dom, cfg.budget, &mut rng).design, false)
                }
                None => (fallback_design(dom, &mut streams.agent_round("fallback", k, round)), true),
            };
            let shared = if cfg.share_noise_sd > 0.0 {
                let mut rng = streams.agent_round("share_noise", k, round);
                let noisy: Vec<f64> = candidate
                    .iter()
                    .map(|x| x + cfg.share_noise_sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                dom.clamp(&Design::new(noisy))
            } else {
                candidate.clone()
            };
            (candidate, shared, fallback)
        })
        .collect();
    let fallbacks = agents
        .iter()
        .zip(&proposals)
        .filter(|(_, p)| p.2)
        .map(|(a, _)| a.id())
        .collect();
    let candidates = CandidateSet(proposals.iter().map(|p| p.0.clone()).collect());
    let shared = CandidateSet(proposals.into_iter().map(|p| p.1).collect());
    // Consensus
    *w = schedule.advance(w)?;
    let decisions = consensus_mix(w, &shared, dom)?;
    Ok(ConsensusRound { candidates, shared, weights: w.clone(), decisions, fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mix_is_noop() {
        let dom = Domain::unit(2);
        let c = CandidateSet(vec![Design::new(vec![0.1, 0.2]), Design::new(vec![0.9, 0.4]), Design::new(vec![0.3, 0.3])]);
        assert_eq!(consensus_mix(&ConsensusMatrix::identity(3), &c, &dom).unwrap(), c.0);
    }

    #[test]
    fn two_agent_average() {
        let dom = Domain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let c = CandidateSet(vec![Design::new(vec![0.0, 0.0]), Design::new(vec![1.0, 2.0])]);
        let out = consensus_mix(&ConsensusMatrix::uniform(2), &c, &dom).unwrap();
        assert_eq!(out, vec![Design::new(vec![0.5, 1.0]); 2]);
    }

    #[test]
    fn identical_candidates_are_fixed_points() {
        let dom = Domain::unit(2);
        let w = ConsensusMatrix::new(
            vec![vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.2, 0.3, 0.5]],
            0,
        )
        .unwrap();
        let x = Design::new(vec![0.25, 0.75]);
        let out = consensus_mix(&w, &CandidateSet(vec![x.clone(); 3]), &dom).unwrap();
        for o in out {
            assert!((o[0] - x[0]).abs() < 1e-15 && (o[1] - x[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(ConsensusMatrix::new(vec![vec![0.6, 0.5], vec![0.5, 0.6]], 0).is_err());
        assert!(ConsensusMatrix::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]], 0).is_err());
        assert!(ConsensusMatrix::new(vec![vec![1.2, -0.2], vec![-0.2, 1.2]], 0).is_err());
        let dom = Domain::unit(1);
        let c = CandidateSet(vec![Design::new(vec![0.1])]);
        assert!(consensus_mix(&ConsensusMatrix::uniform(2), &c, &dom).is_err());
    }

    #[test]
    fn linear_step_arithmetic() {
        let w = w_update_linear(&ConsensusMatrix::uniform(2), 2);
        assert_eq!(w.rows(), &[vec![0.75, 0.25], vec![0.25, 0.75]]);
        assert_eq!(w.time(), 1);
    }

    #[test]
    fn identity_is_absorbing() {
        let w = w_update_linear(&ConsensusMatrix::identity(3), 5);
        assert_eq!(w.rows(), ConsensusMatrix::identity(3).rows());
        assert!(w.is_clamped());
    }

    #[test]
    fn uniform_decays_to_identity() {
        for k in 1..7 {
            for horizon in [1, 2, 7, 30] {
                let schedule = WSchedule::LinearDecayToIdentity { initial: ConsensusMatrix::uniform(k), horizon };
                let mut w = schedule.initial().clone();
                for _ in 0..horizon {
                    w = schedule.advance(&w).unwrap();
                    for s in w.row_sums().into_iter().chain(w.column_sums()) {
                        assert!((s - 1.0).abs() < 1e-12);
                    }
                }
                let id = ConsensusMatrix::identity(k);
                for i in 0..k {
                    for j in 0..k {
                        assert!((w.weight(i, j) - id.weight(i, j)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn clamping_marks_matrix() {
        let w0 = ConsensusMatrix::new(
            vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.45, 0.45], vec![0.1, 0.45, 0.45]],
            0,
        )
        .unwrap();
        let schedule = WSchedule::LinearDecayToIdentity { initial: w0, horizon: 2 };
        let w2 = schedule.matrix_at(2).unwrap();
        assert!(w2.is_clamped());
        assert!(w2.rows().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn custom_schedule_output_is_validated() {
        let bad: CustomStep = Arc::new(|w: &ConsensusMatrix| ConsensusMatrix {
            weights: vec![vec![0.9, 0.3], vec![0.3, 0.9]],
            time: w.time,
            clamped: false,
        });
        let schedule = WSchedule::Custom { initial: ConsensusMatrix::uniform(2), step: bad };
        assert!(schedule.advance(schedule.initial()).is_err());
    }
}
