//! Synthetic heterogeneous black-box families and regret bookkeeping.
//!
//! A family is one base function `g` on the unit box, and agent `k` observes
//! `f_k(x) = s_k g(x - b_k) + c_k` with its own shift, offset and optional
//! sign flip. Ground-truth optima are found by dense search so regret can be
//! scored on noiseless values.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{Streams, GLOBAL};
use crate::surrogate::{Design, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFunction {
    /// `-Σ (x_j - 0.5)²`, one maximum at the center.
    SphereBowl,
    /// Four Gaussian bumps of decreasing height at seeded centers.
    MultiBump,
    /// `Π_j (1 + cos(3π(x_j - 0.35))) / 2`, a lattice of local maxima with
    /// the global one at `0.35` in every coordinate.
    ProductPeaks,
}

pub const BUMP_HEIGHTS: [f64; 4] = [1.0, 0.8, 0.6, 0.5];
pub const BUMP_WIDTH: f64 = 0.12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub base: BaseFunction,
    pub dim: usize,
    pub agents: usize,
    /// Shifts are drawn from `U(-h, h)^d`.
    #[serde(default)]
    pub heterogeneity: f64,
    /// Offsets are drawn from `U(-c, c)`.
    #[serde(default)]
    pub offset_scale: f64,
    /// Flip the sign of every odd-numbered agent.
    #[serde(default)]
    pub adversarial: bool,
    #[serde(default)]
    pub noise_sd: f64,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("family dim must be at least 1".into()));
        }
        if self.agents == 0 {
            return Err(Error::InvalidParameter("family needs at least one agent".into()));
        }
        for (name, v) in [
            ("heterogeneity", self.heterogeneity),
            ("offset_scale", self.offset_scale),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFunction {
    pub shift: Vec<f64>,
    pub offset: f64,
    pub sign: f64,
    /// Grid-resolution maximizer and maximum of the noiseless function.
    pub argmax: Design,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxFamily {
    spec: FamilySpec,
    seed: u64,
    centers: Vec<Vec<f64>>,
    agents: Vec<AgentFunction>,
}

impl BlackBoxFamily {
    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> Domain {
        Domain::unit(self.spec.dim)
    }

    pub fn agents(&self) -> &[AgentFunction] {
        &self.agents
    }

    pub fn agent(&self, k: usize) -> &AgentFunction {
        &self.agents[k]
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn optimum(&self, k: usize) -> f64 {
        self.agents[k].max
    }

    /// The base function `g`.
    pub fn base_value(&self, x: &[f64]) -> f64 {
        base_value(self.spec.base, &self.centers, x)
    }

    /// Noiseless `f_k(x)`.
    pub fn true_value(&self, k: usize, x: &[f64]) -> f64 {
        let a = &self.agents[k];
        agent_value(self.spec.base, &self.centers, a.sign, &a.shift, a.offset, x)
    }

    /// `f_k(x) + ε` with `ε ~ N(0, noise_sd²)`.
    pub fn evaluate<R: Rng + ?Sized>(&self, k: usize, x: &[f64], rng: &mut R) -> f64 {
        let noise: f64 = rng.sample(StandardNormal);
        self.true_value(k, x) + self.spec.noise_sd * noise
    }

    /// `x,f_0(x),…,f_{K-1}(x)` rows for plotting.
    pub fn probe_csv(&self, points: &[Design]) -> String {
        let mut out = String::new();
        for j in 0..self.spec.dim {
            out.push_str(&format!("x{j},"));
        }
        out.push_str(&(0..self.agents.len()).map(|k| format!("f{k}")).collect::<Vec<_>>().join(","));
        out.push('\n');
        for p in points {
            let mut cells: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            cells.extend((0..self.agents.len()).map(|k| self.true_value(k, p).to_string()));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn base_value(base: BaseFunction, centers: &[Vec<f64>], x: &[f64]) -> f64 {
    match base {
        BaseFunction::SphereBowl => -x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>(),
        BaseFunction::MultiBump => centers
            .iter()
            .zip(BUMP_HEIGHTS)
            .map(|(c, h)| {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                h * (-r2 / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp()
            })
            .sum(),
        BaseFunction::ProductPeaks => x
            .iter()
            .map(|v| 0.5 * (1.0 + (3.0 * std::f64::consts::PI * (v - 0.35)).cos()))
            .product(),
    }
}

fn agent_value(base: BaseFunction, centers: &[Vec<f64>], sign: f64, shift: &[f64], offset: f64, x: &[f64]) -> f64 {
    let moved: Vec<f64> = x.iter().zip(shift).map(|(a, b)| a - b).collect();
    sign * base_value(base, centers, &moved) + offset
}

/// Points of the regular `n^d` grid on the unit box.
fn grid_points(dim: usize, n: usize) -> impl Iterator<Item = Vec<f64>> {
    let total = n.pow(dim as u32);
    (0..total).map(move |mut idx| {
        (0..dim)
            .map(|_| {
                let i = idx % n;
                idx /= n;
                i as f64 / (n - 1) as f64
            })
            .collect()
    })
}

pub const GRID_SIDE: usize = 201;
pub const RANDOM_PROBES: usize = 1 << 16;

/// Dense-grid maximum for `d ≤ 2`; otherwise `2^16` uniform probes followed
/// by coordinate refinement from the best one.
fn ground_truth<F: Fn(&[f64]) -> f64, R: Rng + ?Sized>(f: F, dim: usize, rng: &mut R) -> (Design, f64) {
    let mut best = (vec![0.0; dim], f64::NEG_INFINITY);
    if dim <= 2 {
        for p in grid_points(dim, GRID_SIDE) {
            let v = f(&p);
            if v > best.1 {
                best = (p, v);
            }
        }
        return (Design::new(best.0), best.1);
    }
    let dom = Domain::unit(dim);
    for _ in 0..RANDOM_PROBES {
        let p = dom.sample_uniform(rng).into_inner();
        let v = f(&p);
        if v > best.1 {
            best = (p, v);
        }
    }
    // coordinate refinement around the best probe
    let mut x = best.0;
    let mut v = best.1;
    let mut step = 0.01;
    while step > 1e-9 {
        let mut improved = false;
        for j in 0..dim {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] = (y[j] + dir * step).clamp(0.0, 1.0);
                let fy = f(&y);
                if fy > v {
                    x = y;
                    v = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (Design::new(x), v)
}

/// Deterministic family instance. Agent `k`'s shift and offset come from its
/// own substream, so they do not depend on how many agents there are.
pub fn make_family(spec: &FamilySpec, seed: u64) -> Result<BlackBoxFamily> {
    spec.validate()?;
    let streams = Streams::new(seed);
    let d = spec.dim;
    let mut crng = streams.stream("family_centers", GLOBAL, 0);
    let centers: Vec<Vec<f64>> = match spec.base {
        BaseFunction::MultiBump => BUMP_HEIGHTS
            .iter()
            .map(|_| (0..d).map(|_| crng.random_range(0.15..0.85)).collect())
            .collect(),
        _ => Vec::new(),
    };
    let mut agents = Vec::with_capacity(spec.agents);
    for k in 0..spec.agents {
        let mut r = streams.agent_round("family_agent", k, 0);
        let shift: Vec<f64> = (0..d)
            .map(|_| {
                let u: f64 = r.random();
                spec.heterogeneity * (2.0 * u - 1.0)
            })
            .collect();
        let u: f64 = r.random();
        let offset = spec.offset_scale * (2.0 * u - 1.0);
        let sign = if spec.adversarial && k % 2 == 1 { -1.0 } else { 1.0 };
        let mut probe = streams.agent_round("family_truth", k, 0);
        let (argmax, max) = ground_truth(|x| agent_value(spec.base, &centers, sign, &shift, offset, x), d, &mut probe);
        agents.push(AgentFunction { shift, offset, sign, argmax, max });
    }
    Ok(BlackBoxFamily { spec: spec.clone(), seed, centers, agents })
}

/// Per-agent simple and cumulative regret, scored on noiseless values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    optimum: Vec<f64>,
    best: Vec<f64>,
    simple: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
}

impl RegretTrace {
    pub fn new(optimum: Vec<f64>) -> Self {
        let k = optimum.len();
        Self { optimum, best: vec![f64::NEG_INFINITY; k], simple: vec![Vec::new(); k], cumulative: vec![Vec::new(); k] }
    }

    pub fn for_family(f: &BlackBoxFamily) -> Self {
        Self::new(f.agents.iter().map(|a| a.max).collect())
    }

    pub fn agents(&self) -> usize {
        self.optimum.len()
    }

    /// Records a trial of agent `k` with noiseless value `true_f` and returns
    /// the new simple regret. Values above the grid optimum count as zero
    /// regret.
    pub fn regret_update(&mut self, k: usize, true_f: f64) -> f64 {
        if true_f > self.best[k] {
            self.best[k] = true_f;
        }
        let simple = (self.optimum[k] - self.best[k]).max(0.0);
        let instant = (self.optimum[k] - true_f).max(0.0);
        let cum = self.cumulative[k].last().copied().unwrap_or(0.0) + instant;
        self.simple[k].push(simple);
        self.cumulative[k].push(cum);
        simple
    }

    pub fn simple(&self, k: usize) -> &[f64] {
        &self.simple[k]
    }

    pub fn cumulative(&self, k: usize) -> &[f64] {
        &self.cumulative[k]
    }

    pub fn final_simple(&self, k: usize) -> Option<f64> {
        self.simple[k].last().copied()
    }

    /// Mean of the agents' final simple regrets.
    pub fn mean_final_simple(&self) -> f64 {
        let v: Vec<f64> = (0..self.agents()).filter_map(|k| self.final_simple(k)).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
