//! Utilities and expected-utility maximization.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::surrogate::{Design, Domain, GpPosterior};
use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Utility `U` whose posterior expectation is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// `max(f(x) - y*, 0)`.
    Improvement { incumbent: f64 },
    /// `μ(x) - η σ(x)`.
    LcbMaximizer { eta: f64 },
    /// `μ(x) + η σ(x)`.
    Ucb { eta: f64 },
    /// `f(x)` itself; its expectation is the posterior mean.
    Thompson,
}

impl Utility {
    /// Closed-form expected utility under a GP posterior.
    pub fn expected(&self, p: &GpPosterior, x: &[f64]) -> Result<f64> {
        match *self {
            Utility::Improvement { incumbent } => expected_improvement(p, x, incumbent),
            Utility::LcbMaximizer { eta } => confidence_bound(p, x, eta, BoundSide::Lower),
            Utility::Ucb { eta } => confidence_bound(p, x, eta, BoundSide::Upper),
            Utility::Thompson => p.mean(x),
        }
    }
}

/// Utility family chosen per experiment; parameters that depend on the
/// agent's data (the incumbent) are filled in from its posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityChoice {
    /// Improvement over the best observed response.
    #[default]
    Improvement,
    LcbMaximizer { eta: f64 },
    Ucb { eta: f64 },
    Thompson,
}

impl UtilityChoice {
    pub fn for_posterior(&self, p: &GpPosterior) -> Utility {
        match *self {
            UtilityChoice::Improvement => Utility::Improvement {
                incumbent: p.training().max_response().unwrap_or(f64::NEG_INFINITY),
            },
            UtilityChoice::LcbMaximizer { eta } => Utility::LcbMaximizer { eta },
            UtilityChoice::Ucb { eta } => Utility::Ucb { eta },
            UtilityChoice::Thompson => Utility::Thompson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Expected improvement of a Gaussian with the given moments over `incumbent`.
pub fn ei_from_moments(mean: f64, sd: f64, incumbent: f64) -> f64 {
    let gap = mean - incumbent;
    if sd <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    (gap * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(p: &GpPosterior, x: &[f64], incumbent: f64) -> Result<f64> {
    let pred = p.predict(x)?;
    Ok(ei_from_moments(pred.mean, pred.sd, incumbent))
}

/// `μ ∓ η σ`.
pub fn confidence_bound(p: &GpPosterior, x: &[f64], eta: f64, side: BoundSide) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("confidence width must be nonnegative, got {eta}")));
    }
    let pred = p.predict(x)?;
    Ok(match side {
        BoundSide::Lower => pred.mean - eta * pred.sd,
        BoundSide::Upper => pred.mean + eta * pred.sd,
    })
}

/// Confidence-width schedule `η_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    /// `√(2 ln(d t² π² / (6δ)))`.
    GpUcb { delta: f64 },
    Constant { eta: f64 },
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule::GpUcb { delta: 0.1 }
    }
}

impl EtaSchedule {
    pub fn eta(&self, dim: usize, t: usize) -> f64 {
        match *self {
            EtaSchedule::Constant { eta } => eta,
            EtaSchedule::GpUcb { delta } => {
                let t = t.max(1) as f64;
                let arg = dim as f64 * t * t * std::f64::consts::PI.powi(2) / (6.0 * delta);
                (2.0 * arg.ln()).max(0.0).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    pub design: Design,
    pub value: f64,
    pub evals: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes `score` over the box with a uniform random candidate set
/// followed by coordinate pattern-search refinement from the best candidate.
///
/// `budget` counts every score evaluation; a quarter of it (rounded down)
/// goes to refinement. Ties keep the earliest evaluated design.
pub fn maximize_acquisition<F, R>(mut score: F, dom: &Domain, budget: usize, rng: &mut R) -> AcquisitionResult
where
    F: FnMut(&Design) -> f64,
    R: Rng + ?Sized,
{
    let budget = budget.max(1);
    let refine = budget / 4;
    let n_candidates = budget - refine;

    let mut best_x = dom.sample_uniform(rng);
    let mut best_v = sanitize(score(&best_x));
    for _ in 1..n_candidates {
        let x = dom.sample_uniform(rng);
        let v = sanitize(score(&x));
        if v > best_v {
            best_x = x;
            best_v = v;
        }
    }
    let mut evals = n_candidates;

    let d = dom.dim();
    let mut step: Vec<f64> = (0..d).map(|j| 0.1 * dom.width(j)).collect();
    let mut left = refine;
    while left > 0 {
        let mut improved = false;
        'coords: for j in 0..d {
            for dir in [1.0, -1.0] {
                if left == 0 {
                    break 'coords;
                }
                let moved = (best_x[j] + dir * step[j]).clamp(dom.lower()[j], dom.upper()[j]);
                if moved == best_x[j] {
                    continue;
                }
                let mut y = best_x.clone().into_inner();
                y[j] = moved;
                let y = Design::new(y);
                left -= 1;
                evals += 1;
                let v = sanitize(score(&y));
                if v > best_v {
                    best_x = y;
                    best_v = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
            if (0..d).all(|j| step[j] < 1e-9 * dom.width(j)) {
                break;
            }
        }
    }
    AcquisitionResult { design: best_x, value: best_v, evals }
}

/// Index of the largest value; the lowest index wins ties. NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let v = sanitize(v);
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Monte Carlo expected utility per candidate. `samples[s][c]` is draw `s`
/// of the surrogate at candidate `c`.
pub fn mc_expected_utility(samples: &[Vec<f64>], utility: &Utility) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one surrogate sample required".into()))?;
    let m = first.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
    }
    let n = samples.len() as f64;
    let column = |c: usize| samples.iter().map(move |s| s[c]);
    let out = (0..m)
        .map(|c| match *utility {
            Utility::Improvement { incumbent } => column(c).map(|v| (v - incumbent).max(0.0)).sum::<f64>() / n,
            Utility::Thompson => column(c).sum::<f64>() / n,
            Utility::LcbMaximizer { eta } | Utility::Ucb { eta } => {
                let mean = column(c).sum::<f64>() / n;
                let sd = (column(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                if matches!(utility, Utility::Ucb { .. }) {
                    mean + eta * sd
                } else {
                    mean - eta * sd
                }
            }
        })
        .collect();
    Ok(out)
}

/// Plain single-agent BO step: maximize expected improvement over the
/// best observed response.
pub fn bo_decision<R: Rng + ?Sized>(p: &GpPosterior, dom: &Domain, budget: usize, rng: &mut R) -> AcquisitionResult {
    let utility = UtilityChoice::Improvement.for_posterior(p);
    maximize_acquisition(|x| utility.expected(p, x).unwrap_or(f64::NEG_INFINITY), dom, budget, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Dataset, GpHyperparams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy_posterior() -> GpPosterior {
        let data = Dataset::from_pairs(
            0,
            [(vec![0.1, 0.2], 0.3), (vec![0.7, 0.6], 1.1), (vec![0.4, 0.9], -0.4)]
                .into_iter()
                .map(|(x, y)| (Design::new(x), y)),
        )
        .unwrap();
        GpPosterior::fit(&GpHyperparams::isotropic(2, 1.0, 0.3, 1e-4).unwrap(), &data).unwrap()
    }

    #[test]
    fn ei_closed_form_cases() {
        assert_eq!(ei_from_moments(1.0, 0.0, 1.0), 0.0);
        assert_eq!(ei_from_moments(2.0, 0.0, 1.0), 1.0);
        assert!((ei_from_moments(1.0, 1.0, 1.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((ei_from_moments(1.0, 1.0, 1.0) - 0.39894).abs() < 1e-5);
    }

    #[test]
    fn ei_monotone_in_mean_and_sd() {
        let mut prev = 0.0;
        for i in 0..40 {
            let v = ei_from_moments(-2.0 + 0.1 * i as f64, 0.7, 0.0);
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..40 {
            let v = ei_from_moments(-0.5, 0.05 * i as f64, 0.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn confidence_bounds() {
        let p = toy_posterior();
        let x = [0.5, 0.5];
        let pred = p.predict(&x).unwrap();
        let lo = confidence_bound(&p, &x, 1.0, BoundSide::Lower).unwrap();
        let hi = confidence_bound(&p, &x, 1.0, BoundSide::Upper).unwrap();
        assert!((lo - (pred.mean - pred.sd)).abs() < 1e-15);
        assert!(lo <= pred.mean && pred.mean <= hi);
        assert_eq!(confidence_bound(&p, &x, 0.0, BoundSide::Lower).unwrap(), pred.mean);
        assert!(confidence_bound(&p, &x, -1.0, BoundSide::Lower).is_err());
    }

    #[test]
    fn finds_quadratic_peak() {
        let dom = Domain::unit(2);
        let c = [0.37, 0.81];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = maximize_acquisition(|x| -x.distance_squared(&c), &dom, 2048, &mut rng);
        assert!(r.design.distance_squared(&c).sqrt() < 0.05);
        assert!(dom.contains(&r.design));
        assert!(r.evals <= 2048 && r.evals >= 1536);
    }

    #[test]
    fn constant_score_and_unit_budget() {
        let dom = Domain::new(vec![-1.0], vec![2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = maximize_acquisition(|_| 3.0, &dom, 100, &mut rng);
        assert_eq!(r.value, 3.0);
        assert!(dom.contains(&r.design));

        let first = dom.sample_uniform(&mut ChaCha8Rng::seed_from_u64(11));
        let r = maximize_acquisition(|x| x[0], &dom, 1, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(r.design, first);
        assert_eq!(r.evals, 1);
    }

    #[test]
    fn returned_value_dominates_all_evaluations() {
        let dom = Domain::unit(3);
        let mut seen = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r = maximize_acquisition(
            |x| {
                let v = (5.0 * x[0]).sin() * (3.0 * x[1]).cos() + x[2];
                seen.push(v);
                v
            },
            &dom,
            300,
            &mut rng,
        );
        assert!(seen.iter().all(|v| *v <= r.value));
        assert_eq!(seen.len(), r.evals);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[f64::NAN, -1.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn mc_utility_single_sample_and_below_incumbent() {
        let s = vec![vec![1.0, 3.0, -2.0]];
        let u = Utility::Improvement { incumbent: 0.5 };
        assert_eq!(mc_expected_utility(&s, &u).unwrap(), vec![0.5, 2.5, 0.0]);
        assert_eq!(mc_expected_utility(&s, &Utility::Thompson).unwrap(), s[0]);
        let below = vec![vec![0.1, -1.0], vec![0.2, 0.4]];
        assert_eq!(mc_expected_utility(&below, &u).unwrap(), vec![0.0, 0.0]);
        assert!(mc_expected_utility(&[], &u).is_err());
    }

    #[test]
    fn mc_improvement_matches_closed_form() {
        let (mu, sd, inc) = (0.3, 0.8, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let samples: Vec<Vec<f64>> = draws.iter().map(|v| vec![*v]).collect();
        let est = mc_expected_utility(&samples, &Utility::Improvement { incumbent: inc }).unwrap()[0];
        let imp: Vec<f64> = draws.iter().map(|v| (v - inc).max(0.0)).collect();
        let m = imp.iter().sum::<f64>() / n as f64;
        let se = (imp.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((est - ei_from_moments(mu, sd, inc)).abs() < 3.0 * se);
    }

    #[test]
    fn eta_schedule_values() {
        let e = EtaSchedule::default().eta(2, 1);
        let expected = (2.0 * (2.0 * std::f64::consts::PI.powi(2) / 0.6f64).ln()).sqrt();
        assert!((e - expected).abs() < 1e-12);
        assert!(EtaSchedule::default().eta(2, 10) > e);
        assert_eq!(EtaSchedule::Constant { eta: 0.0 }.eta(3, 5), 0.0);
    }
}
