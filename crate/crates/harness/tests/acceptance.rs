//! Acceptance suite. Each test prints one PASS/FAIL line.

use std::collections::HashSet;
use std::time::Instant;

use fedbbo::config::Framework;
use fedbbo::events::Event;
use fedbbo::run::{initial_designs, noise_stream};
use fedbbo::{run_experiment, run_with_threads, ExperimentConfig};
use fedbbo_core::benchmarks::{make_family, median};
use fedbbo_core::conditioned::acceptance_rate;
use fedbbo_core::consensus::{consensus_mix, w_update_linear, CandidateSet, ConsensusMatrix};
use fedbbo_core::fed::{run_federated, FedConfig};
use fedbbo_core::rff_sharing::{clip_to_norm, dp_average, rff_thompson_decision, DpConfig, MixSchedule, WeightMessage};
use fedbbo_core::rng::{StreamRng, Streams};
use fedbbo_core::surrogate::{log_marginal_likelihood, BlrPosterior, GpHyperparams, LogHyperparams, RffFeatureMap};
use fedbbo_core::{Dataset, Design, Domain, GpPosterior};
use rand::Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn rng(purpose: &str, i: usize) -> StreamRng {
    Streams::new(20_240_601).agent_round(purpose, i, 0)
}

fn gaussian<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller
    let u: f64 = 1.0 - r.random::<f64>();
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

// ---------- independent dense-formula GP oracle ----------

fn se_kernel(sf2: f64, ls: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut q = 0.0;
    for j in 0..a.len() {
        let r = (a[j] - b[j]) / ls[j];
        q += r * r;
    }
    sf2 * (-0.5 * q).exp()
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                for j in 0..n {
                    a[i][j] -= f * a[c][j];
                    inv[i][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

fn oracle_predict(sf2: f64, ls: &[f64], s2: f64, xs: &[Vec<f64>], y: &[f64], x: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| se_kernel(sf2, ls, &xs[i], &xs[j]) + if i == j { s2 } else { 0.0 }).collect())
        .collect();
    let kinv = invert(k);
    let ks: Vec<f64> = xs.iter().map(|xi| se_kernel(sf2, ls, xi, x)).collect();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += ks[i] * kinv[i][j] * y[j];
            quad += ks[i] * kinv[i][j] * ks[j];
        }
    }
    (mean, sf2 - quad)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn criterion_01_gp_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..20 {
        let mut r = rng("gp_oracle", case);
        let d = r.random_range(1..=3);
        let n = r.random_range(1..=10);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| 2.0 * gaussian(&mut r)).collect();
        let sf2 = r.random_range(0.5..2.0);
        let ls: Vec<f64> = (0..d).map(|_| r.random_range(0.1..1.0)).collect();
        let s2 = r.random_range(1e-3..1e-1);
        let h = GpHyperparams::new(sf2, ls.clone(), s2).unwrap();
        let data = Dataset::from_pairs(0, xs.iter().cloned().map(Design::new).zip(y.iter().cloned())).unwrap();
        let raw = GpPosterior::fit_raw(&h, &data).unwrap();
        let std = GpPosterior::fit(&h, &data).unwrap();
        let s = std.standardization();
        let ys: Vec<f64> = y.iter().map(|v| (v - s.offset) / s.scale).collect();
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let (m, v) = oracle_predict(sf2, &ls, s2, &xs, &y, &x);
            let p = raw.predict(&x).unwrap();
            worst = worst.max(rel(p.mean, m)).max(rel(p.sd * p.sd, v));
            let (ms, vs) = oracle_predict(sf2, &ls, s2, &xs, &ys, &x);
            let q = std.predict(&x).unwrap();
            worst = worst.max(rel(q.mean, ms * s.scale + s.offset)).max(rel(q.sd * q.sd, vs * s.scale * s.scale));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(1, "GP oracle equivalence", worst <= 1e-8 && secs < 5.0, format!("max rel err {worst:.2e} over 20 datasets in {secs:.2}s"));
}

#[test]
fn criterion_02_lml_gradient_finite_differences() {
    let mut worst = 0.0f64;
    for case in 0..10 {
        let mut r = rng("lml_fd", case);
        let d = r.random_range(1..=3);
        let n = r.random_range(3..=12);
        let data = Dataset::from_pairs(
            0,
            (0..n).map(|_| {
                let x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
                let y = (3.0 * x[0]).sin() + 0.3 * gaussian(&mut r);
                (Design::new(x), y)
            }),
        )
        .unwrap();
        let theta: Vec<f64> = (0..d + 2)
            .map(|i| if i == d + 1 { r.random_range(-4.0..-1.0) } else { r.random_range(-1.5..0.5) })
            .collect();
        let lml = |t: &[f64]| log_marginal_likelihood(&LogHyperparams(t.to_vec()).to_hyperparams().unwrap(), &data).unwrap();
        let (_, grad) = lml(&theta);
        let step = 1e-5;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += step;
            dn[i] -= step;
            let fd = (lml(&up).0 - lml(&dn).0) / (2.0 * step);
            worst = worst.max((grad[i] - fd).abs() / fd.abs().max(1e-3));
        }
    }
    report(2, "LML gradient vs central differences", worst <= 1e-4, format!("max rel err {worst:.2e} over 10 problems"));
}

#[test]
fn criterion_03_rff_kernel_approximation() {
    let d = 3;
    let h = GpHyperparams::isotropic(d, 1.0, 1.0, 0.0).unwrap();
    let mut r = rng("rff_pairs", 0);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| ((0..d).map(|_| r.random::<f64>()).collect(), (0..d).map(|_| r.random::<f64>()).collect()))
        .collect();
    let errs: Vec<f64> = (0..5)
        .map(|seed| {
            let map = RffFeatureMap::build(seed, 4096, &h).unwrap();
            pairs
                .iter()
                .map(|(a, b)| {
                    let fa = map.features(a).unwrap();
                    let fb = map.features(b).unwrap();
                    let dot: f64 = fa.iter().zip(&fb).map(|(u, v)| u * v).sum();
                    (dot - se_kernel(1.0, &[1.0; 3], a, b)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let m = median(&errs);
    report(3, "RFF kernel approximation", m <= 0.05, format!("median over 5 seeds of max error {m:.4} (D = 4096)"));
}

#[test]
fn criterion_04_consensus_schedule() {
    let mut worst_identity = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut hull_ok = true;
    let mut r = rng("consensus_hull", 0);
    for k in 1..=6 {
        for horizon in [1, 5, 10, 30] {
            let dom = Domain::unit(2);
            let mut w = ConsensusMatrix::uniform(k);
            for _ in 0..horizon {
                w = w_update_linear(&w, horizon);
                for s in w.row_sums().into_iter().chain(w.column_sums()) {
                    worst_sum = worst_sum.max((s - 1.0).abs());
                }
                let cands: Vec<Design> = (0..k).map(|_| dom.sample_uniform(&mut r)).collect();
                for x in consensus_mix(&w, &CandidateSet(cands.clone()), &dom).unwrap() {
                    for j in 0..2 {
                        let lo = cands.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min);
                        let hi = cands.iter().map(|c| c[j]).fold(f64::NEG_INFINITY, f64::max);
                        hull_ok &= x[j] >= lo - 1e-12 && x[j] <= hi + 1e-12;
                    }
                }
            }
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst_identity = worst_identity.max((w.weight(i, j) - target).abs());
                }
            }
        }
    }
    let pass = worst_identity <= 1e-12 && worst_sum <= 1e-12 && hull_ok;
    report(
        4,
        "consensus schedule",
        pass,
        format!("|W^(T) - I| max {worst_identity:.1e}, row/col sum dev {worst_sum:.1e}, hull ok {hull_ok}"),
    );
}

fn base_config(framework: Framework, agents: usize, rounds: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str(&format!("schema_version = 1\nagents = {agents}\nrounds = {rounds}\nseed = {seed}\n")).unwrap();
    c.framework = framework;
    c
}

fn trial_seq(events: &[Event]) -> Vec<(usize, Vec<f64>, u64)> {
    events
        .iter()
        .filter_map(|e| match e {
            Event::Trial { agent, design, response, .. } => Some((*agent, design.clone(), response.to_bits())),
            _ => None,
        })
        .collect()
}

/// Per-agent RFF Thompson sampling written against the core API only.
fn rff_reference(cfg: &ExperimentConfig) -> Vec<(usize, Vec<f64>, u64)> {
    let family = make_family(&cfg.family_spec(), cfg.seed).unwrap();
    let dom = family.domain();
    let streams = Streams::new(cfg.seed);
    let map = RffFeatureMap::build(cfg.feature_seed(), cfg.rff.features, &cfg.hyperparams()).unwrap();
    let mut data: Vec<Dataset> = (0..cfg.agents).map(Dataset::new).collect();
    let mut out = Vec::new();
    for (k, d) in data.iter_mut().enumerate() {
        let mut noise = noise_stream(&streams, k, 0);
        for x in initial_designs(cfg, &streams, k) {
            let y = family.evaluate(k, &x, &mut noise);
            out.push((k, x.coords().to_vec(), y.to_bits()));
            d.push(x, y).unwrap();
        }
    }
    for t in 1..=cfg.rounds {
        for (k, d) in data.iter_mut().enumerate() {
            let blr = BlrPosterior::fit(&map, d, cfg.rff.noise_variance).unwrap();
            let mut rng = streams.agent_round("decision", k, t);
            let x = rff_thompson_decision(&blr, &map, &dom, cfg.acquisition.budget, &mut rng).design;
            let y = family.evaluate(k, &x, &mut noise_stream(&streams, k, t));
            out.push((k, x.coords().to_vec(), y.to_bits()));
            d.push(x, y).unwrap();
        }
    }
    // harness logs in round order with agents ascending, as here
    out
}

#[test]
fn criterion_05_degeneration_equivalences() {
    let indep1 = run_experiment(&base_config(Framework::Independent, 1, 12, 3)).unwrap();
    let cons1 = run_experiment(&base_config(Framework::Consensus, 1, 12, 3)).unwrap();
    let a = trial_seq(&indep1.events) == trial_seq(&cons1.events);

    let indep3 = run_experiment(&base_config(Framework::Independent, 3, 10, 4)).unwrap();
    let mut sd = base_config(Framework::SharedDesigns, 3, 10, 4);
    sd.shared_designs.eta = fedbbo_core::acquisition::EtaSchedule::Constant { eta: 1e6 };
    let shared = run_experiment(&sd).unwrap();
    let no_share = !shared.events.iter().any(|e| matches!(e, Event::Message { kind: fedbbo::events::PayloadKind::SharedDesign, .. }));
    let b = no_share && trial_seq(&indep3.events) == trial_seq(&shared.events);

    let mut rf = base_config(Framework::RffSharing, 3, 10, 5);
    rf.rff.schedule = Some(MixSchedule::Linear { start: 1.0, horizon: 10 });
    let rff = run_experiment(&rf).unwrap();
    let c = trial_seq(&rff.events) == rff_reference(&rf);

    report(
        5,
        "degeneration equivalences",
        a && b && c,
        format!("consensus K=1 == independent: {a}; shared_designs without sharing == independent: {b}; rff p=1 == RFF-Thompson: {c}"),
    );
}

/// Φ via the Abramowitz-Stegun 7.1.26 erfc approximation (|error| < 1.5e-7).
fn phi(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc = poly * (-x * x).exp();
    if z >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

#[test]
fn criterion_06_rejection_sampling_statistics() {
    let data = Dataset::from_pairs(0, [(0.1, 0.3), (0.35, 1.1), (0.7, -0.4), (0.9, 0.2)].map(|(x, y)| (Design::new(vec![x]), y))).unwrap();
    let p = GpPosterior::fit(&GpHyperparams::isotropic(1, 1.0, 0.2, 1e-3).unwrap(), &data).unwrap();
    let x = Design::new(vec![0.55]);
    let pred = p.predict(&x).unwrap();
    let n = 10_000;
    let mut worst = 0.0f64;
    let mut rates = Vec::new();
    for (i, z) in [-1.5, -0.6, 0.0, 0.6, 1.5].iter().enumerate() {
        let delta = pred.mean + z * pred.sd;
        let rate = acceptance_rate(&p, &x, delta, n, &mut rng("rs_stats", i)).unwrap();
        worst = worst.max((rate - phi((pred.mean - delta) / pred.sd)).abs());
        rates.push(rate);
    }
    let monotone = rates.windows(2).all(|w| {
        let se = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / n as f64).sqrt();
        w[1] <= w[0] + 2.0 * se
    });
    report(
        6,
        "rejection-sampling statistics",
        worst <= 0.05 && monotone,
        format!("max |rate - Φ| {worst:.4}, monotone {monotone}, rates {rates:?}"),
    );
}

fn median_final(framework: Framework, agents: usize, rounds: usize, seeds: u64, tweak: impl Fn(&mut ExperimentConfig)) -> f64 {
    let regrets: Vec<f64> = (0..seeds)
        .map(|s| {
            let mut c = base_config(framework, agents, rounds, 1000 + s);
            tweak(&mut c);
            run_experiment(&c).unwrap().mean_final_regret()
        })
        .collect();
    median(&regrets)
}

#[test]
fn criterion_07_collaboration_benefit_homogeneous() {
    let start = Instant::now();
    let homogeneous = |c: &mut ExperimentConfig| c.family.heterogeneity = 0.0;
    let indep = median_final(Framework::Independent, 4, 30, 20, homogeneous);
    let cons = median_final(Framework::Consensus, 4, 30, 20, homogeneous);
    let shared = median_final(Framework::SharedDesigns, 4, 30, 20, homogeneous);
    let secs = start.elapsed().as_secs_f64();
    report(
        7,
        "collaboration benefit (homogeneous)",
        cons <= indep && shared <= indep && secs < 600.0,
        format!("median final regret independent {indep:.4e}, consensus {cons:.4e}, shared_designs {shared:.4e} ({secs:.0}s)"),
    );
}

#[test]
fn criterion_08_heterogeneity_robustness() {
    let adversarial = |c: &mut ExperimentConfig| {
        c.family.adversarial = true;
        c.shared_designs.rs_budget = 512;
    };
    let indep = median_final(Framework::Independent, 2, 30, 20, adversarial);
    let shared = median_final(Framework::SharedDesigns, 2, 30, 20, adversarial);
    report(
        8,
        "heterogeneity robustness (adversarial)",
        shared <= 1.2 * indep,
        format!("median final regret independent {indep:.4e}, shared_designs {shared:.4e} (limit {:.4e})", 1.2 * indep),
    );
}

/// Lower Cholesky factor, written out for the prior sampler.
fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

#[test]
fn criterion_09_federated_gp_recovery() {
    let (sf2, ls, s2) = (1.0, 0.2, 0.01);
    let mut errs = Vec::new();
    let mut rounds_up = 0usize;
    let mut rounds_total = 0usize;
    for seed in 0..10 {
        let mut r = rng("fed_recovery", seed);
        let datasets: Vec<Dataset> = (0..4)
            .map(|k| {
                let xs: Vec<f64> = (0..30).map(|_| r.random::<f64>()).collect();
                let cov: Vec<Vec<f64>> = (0..30)
                    .map(|i| (0..30).map(|j| se_kernel(sf2, &[ls], &[xs[i]], &[xs[j]]) + if i == j { s2 } else { 0.0 }).collect())
                    .collect();
                let l = cholesky(&cov);
                let z: Vec<f64> = (0..30).map(|_| gaussian(&mut r)).collect();
                let y = (0..30).map(|i| (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>());
                Dataset::from_pairs(k, xs.iter().map(|x| Design::new(vec![*x])).zip(y)).unwrap()
            })
            .collect();
        let theta0 = GpHyperparams::new(0.5, vec![0.5], 0.1).unwrap().to_log();
        let cfg = FedConfig { rounds: 50, local_steps: 5, step_size: 2e-3, weights: None, standardize: false, ..FedConfig::default() };
        let tr = run_federated(&theta0, &datasets, &cfg, &Streams::new(seed as u64)).unwrap();
        let est = tr.last().unwrap().to_hyperparams().unwrap().lengthscales[0];
        errs.push((est - ls).abs() / ls);
        for w in tr.objectives.windows(2) {
            rounds_total += 1;
            if w[1] >= w[0] {
                rounds_up += 1;
            }
        }
    }
    let m = median(&errs);
    let frac = rounds_up as f64 / rounds_total as f64;
    report(
        9,
        "federated GP recovery",
        m <= 0.3 && frac >= 0.95,
        format!("median lengthscale rel err {m:.3}, objective nondecreasing in {:.1}% of rounds", 100.0 * frac),
    );
}

#[test]
fn criterion_10_privacy_and_determinism() {
    let mut leaks = 0usize;
    let mut identical = true;
    for fw in Framework::ALL {
        let mut cfg = base_config(fw, 3, 5, 77);
        cfg.acquisition.budget = 256;
        cfg.fed.rounds = 5;
        if fw == Framework::RffSharing {
            cfg.rff.dp = Some(DpConfig { clip_norm: 5.0, noise_sd: 0.1, subset_size: Some(1) });
        }
        let runs: Vec<String> = [1, 2, 8].iter().map(|t| run_with_threads(&cfg, *t).unwrap().events_jsonl()).collect();
        identical &= runs.windows(2).all(|w| w[0] == w[1]);
        let events = fedbbo::events::read_jsonl(runs[0].as_bytes()).unwrap();
        let responses: HashSet<String> = events
            .iter()
            .filter_map(|e| match e {
                Event::Trial { response, .. } => Some(serde_json::to_string(response).unwrap()),
                _ => None,
            })
            .collect();
        for e in &events {
            if let Event::Message { payload, .. } = e {
                let text = payload.to_string();
                leaks += responses.iter().filter(|r| text.contains(r.as_str())).count();
                leaks += usize::from(text.contains("response"));
            }
        }
    }
    report(
        10,
        "privacy and determinism ledgers",
        leaks == 0 && identical,
        format!("{leaks} raw observations in message payloads; logs identical across 1/2/8 threads: {identical}"),
    );
}

#[test]
fn criterion_11_dp_mechanism() {
    let c = 1.5;
    let mut r = rng("dp_clip", 0);
    let mut max_norm = 0.0f64;
    for _ in 0..1000 {
        let dim = r.random_range(1..64);
        let scale = 10f64.powf(r.random_range(-2.0..3.0));
        let w: Vec<f64> = (0..dim).map(|_| scale * gaussian(&mut r)).collect();
        let v = clip_to_norm(&w, c);
        max_norm = max_norm.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let sd = 0.4;
    let cfg = DpConfig { clip_norm: c, noise_sd: sd, subset_size: None };
    let zero = WeightMessage::new(vec![0.0; 8], Some(0), 0).unwrap();
    let mut nr = rng("dp_noise", 0);
    let mut sq = [0.0f64; 8];
    for _ in 0..10_000 {
        let m = dp_average(std::slice::from_ref(&zero), &cfg, 0, &mut nr).unwrap();
        for (s, v) in sq.iter_mut().zip(&m.weights) {
            *s += v * v;
        }
    }
    let worst = sq.iter().map(|s| ((s / 1e4).sqrt() - sd).abs() / sd).fold(0.0, f64::max);
    report(
        11,
        "DP mechanism",
        max_norm <= c * (1.0 + 1e-12) && worst <= 0.03,
        format!("max post-clip norm {max_norm:.6} (C = {c}), worst per-coordinate sd rel err {:.2}%", 100.0 * worst),
    );
}
