//! Federated Thompson sampling over shared random-feature weights.
//!
//! Every agent uses the same feature map, so a weight vector sampled by one
//! agent is a function draw any other agent can maximize. With probability
//! `p_t` an agent maximizes its own fresh draw, otherwise a peer's.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition, AcquisitionResult};
use crate::surrogate::{BlrPosterior, Design, Domain, RffFeatureMap};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMessage {
    pub weights: Vec<f64>,
    /// Sending agent; `None` for a cloud-side aggregate.
    pub source: Option<usize>,
    pub round: usize,
}

impl WeightMessage {
    pub fn new(weights: Vec<f64>, source: Option<usize>, round: usize) -> Result<Self> {
        if let Some(v) = weights.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight message holds a non-finite entry {v}")));
        }
        Ok(Self { weights, source, round })
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_sd: f64,
    /// Peers averaged per recipient; `None` averages all of them.
    #[serde(default)]
    pub subset_size: Option<usize>,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::InvalidParameter(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_sd must be nonnegative, got {}", self.noise_sd)));
        }
        if self.subset_size == Some(0) {
            return Err(Error::InvalidParameter("subset_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Probability `p_t` of relying on one's own weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixSchedule {
    /// `p0 + (1 - p0) min(1, t/T)`.
    Linear {
        #[serde(default)]
        start: f64,
        horizon: usize,
    },
    /// Rises like `1 - e^{-rt}`, rescaled so that `p_0 = p0` and `p_T = 1`.
    Exponential {
        #[serde(default)]
        start: f64,
        rate: f64,
        horizon: usize,
    },
}

impl MixSchedule {
    pub fn linear(horizon: usize) -> Self {
        MixSchedule::Linear { start: 0.0, horizon }
    }

    pub fn validate(&self) -> Result<()> {
        let (start, horizon) = match *self {
            MixSchedule::Linear { start, horizon } => (start, horizon),
            MixSchedule::Exponential { start, rate, horizon } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
                }
                (start, horizon)
            }
        };
        if !(0.0..=1.0).contains(&start) {
            return Err(Error::InvalidParameter(format!("start probability must lie in [0, 1], got {start}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("mix schedule horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: usize) -> f64 {
        mix_schedule_eval(self, t)
    }
}

pub fn mix_schedule_eval(s: &MixSchedule, t: usize) -> f64 {
    let p = match *s {
        MixSchedule::Linear { start, horizon } => {
            let frac = (t as f64 / horizon.max(1) as f64).min(1.0);
            start + (1.0 - start) * frac
        }
        MixSchedule::Exponential { start, rate, horizon } => {
            if t >= horizon {
                1.0
            } else {
                let tail = (-rate * horizon as f64).exp();
                let frac = ((-rate * t as f64).exp() - tail) / (1.0 - tail);
                1.0 - (1.0 - start) * frac
            }
        }
    };
    p.clamp(0.0, 1.0)
}

/// Scales `w` by `min(1, C/‖w‖)`.
pub fn clip_to_norm(w: &[f64], clip_norm: f64) -> Vec<f64> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= clip_norm {
        return w.to_vec();
    }
    let s = clip_norm / norm;
    w.iter().map(|v| v * s).collect()
}

/// Indices of the peers averaged for one recipient, in increasing order.
pub fn dp_subset<R: Rng + ?Sized>(n_peers: usize, cfg: &DpConfig, rng: &mut R) -> Vec<usize> {
    match cfg.subset_size {
        Some(m) if m < n_peers => {
            let mut idx = sample_indices(rng, n_peers, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n_peers).collect(),
    }
}

/// Clipped average of `messages` plus `N(0, noise_sd² I)`.
pub fn dp_average<R: Rng + ?Sized>(messages: &[WeightMessage], cfg: &DpConfig, round: usize, rng: &mut R) -> Result<WeightMessage> {
    cfg.validate()?;
    let first = messages
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot average an empty message set".into()))?;
    let d = first.weights.len();
    let mut sum = vec![0.0; d];
    for m in messages {
        if m.weights.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.weights.len() });
        }
        for (s, v) in sum.iter_mut().zip(clip_to_norm(&m.weights, cfg.clip_norm)) {
            *s += v;
        }
    }
    let n = messages.len() as f64;
    let weights = sum
        .into_iter()
        .map(|s| s / n + cfg.noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    WeightMessage::new(weights, None, round)
}

/// `argmax_x φ(x)ᵀw` over the acquisition candidate search.
pub fn maximize_weights<R: Rng + ?Sized>(map: &RffFeatureMap, weights: &[f64], dom: &Domain, budget: usize, rng: &mut R) -> AcquisitionResult {
    maximize_acquisition(|x| map.evaluate(weights, x).unwrap_or(f64::NEG_INFINITY), dom, budget, rng)
}

/// Single-agent RFF Thompson sampling step.
pub fn rff_thompson_decision<R: Rng + ?Sized>(
    own: &BlrPosterior,
    map: &RffFeatureMap,
    dom: &Domain,
    budget: usize,
    rng: &mut R,
) -> AcquisitionResult {
    let w = own.sample_weights(rng);
    maximize_weights(map, &w, dom, budget, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Own,
    /// Index into the peer message list.
    Peer(usize),
    /// No peer messages were available.
    ForcedOwn,
}

#[derive(Debug, Clone)]
pub struct TsDecision {
    pub design: Design,
    pub value: f64,
    pub choice: WeightChoice,
    /// Rounds between the chosen message and the deciding round.
    pub staleness: Option<usize>,
}

/// Chooses own (with probability `p_t`) or a uniformly random peer's weights.
/// Empty peers force own weights and leave `choice_rng` untouched.
pub fn choose_weights<R: Rng + ?Sized>(n_peers: usize, p_t: f64, choice_rng: &mut R) -> WeightChoice {
    if n_peers == 0 {
        return WeightChoice::ForcedOwn;
    }
    if choice_rng.random::<f64>() < p_t {
        WeightChoice::Own
    } else {
        WeightChoice::Peer(choice_rng.random_range(0..n_peers))
    }
}

/// Shared-weight Thompson step. `choice_rng` drives the own/peer choice and
/// `rng` the weight draw and the search, so `p_t = 1` reproduces
/// [`rff_thompson_decision`] with the same `rng`.
#[allow(clippy::too_many_arguments)]
pub fn ts_decision<R1, R2>(
    own: &BlrPosterior,
    peers: &[WeightMessage],
    map: &RffFeatureMap,
    p_t: f64,
    round: usize,
    dom: &Domain,
    budget: usize,
    choice_rng: &mut R1,
    rng: &mut R2,
) -> Result<TsDecision>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    if !(0.0..=1.0).contains(&p_t) {
        return Err(Error::InvalidParameter(format!("p_t must lie in [0, 1], got {p_t}")));
    }
    for m in peers {
        if m.weights.len() != map.n_features() {
            return Err(Error::DimensionMismatch { expected: map.n_features(), got: m.weights.len() });
        }
    }
    let choice = choose_weights(peers.len(), p_t, choice_rng);
    let (r, staleness) = match choice {
        WeightChoice::Own | WeightChoice::ForcedOwn => (rff_thompson_decision(own, map, dom, budget, rng), None),
        WeightChoice::Peer(i) => (
            maximize_weights(map, &peers[i].weights, dom, budget, rng),
            Some(round.saturating_sub(peers[i].round)),
        ),
    };
    Ok(TsDecision { design: r.design, value: r.value, choice, staleness })
}
