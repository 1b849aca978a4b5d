//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line to
//! stderr (uncaptured) and asserts the expected outcome; the only criterion
//! expected to fail is coordination realizability, whose listed weights are
//! not all correct.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use coplan::coreset::{cmax_bound, CoreElement, CoreSet};
use coplan::features::{dot, AdditiveFeatureMap, FeatureMap, TableAdditiveMap};
use coplan::kernel::{check_kernel_dav, info_gain, kernel_q_eval, kernel_uncertainty, KernelCoreSet, LinearKernel};
use coplan::linalg::{uncertainty_quad_form, whitened_infnorm_direction, PrecisionState, SignedBasis};
use coplan::mdp::{evaluate_joint_policy, joint_actions, reset, EnvironmentSpec, TabularMdp};
use coplan::planner::{politex_sample, theorem_parameters, Algorithm, EvalMode, TheoremVariant};
use coplan::rng::{stream, Stream};
use coplan::uncertainty::{check_dav, CheckKind};
use coplan_cli::{mean_std, run_cells, CellResult, ExperimentConfig, Variant};
use rand::Rng;

const SEEDS: u64 = 25;
const NEAR_OPTIMAL: f64 = 0.02;
const MIN_GOOD_SEEDS: usize = 23;
const MAX_MEAN_HIT_ITERATION: f64 = 10.0;
const CHECK_GAP: f64 = 0.05;
const SANDWICH_SLACK: f64 = 1e-12;
const REALIZABILITY_TOL: f64 = 1e-10;
const KERNEL_TOL: f64 = 1e-8;
const TV_TOL: f64 = 0.02;

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn grid_config(algorithm: Algorithm, n: Vec<usize>) -> ExperimentConfig {
    let variants = [CheckKind::Naive, CheckKind::Egss, CheckKind::Dav].map(|check| Variant { algorithm, check });
    ExperimentConfig { variants: variants.to_vec(), n, seeds: (1..=SEEDS).collect(), eval: EvalMode::DpExact, ..Default::default() }
}

/// LSPI at n ∈ {10, 50} and Politex at n = 10, all three checks, 25 seeds.
fn grid_runs() -> &'static Vec<CellResult> {
    static RUNS: OnceLock<Vec<CellResult>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = run_cells(&grid_config(Algorithm::Lspi, vec![10, 50])).unwrap();
        out.extend(run_cells(&grid_config(Algorithm::Politex, vec![10])).unwrap());
        out
    })
}

/// Small reset-mode runs that exercise restarts and the restart limit.
fn reset_runs() -> &'static Vec<CellResult> {
    static RUNS: OnceLock<Vec<CellResult>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        for environment in [EnvironmentSpec::Coordination, EnvironmentSpec::Product { factors: 2, length: 4, slip: 0.1 }] {
            let cfg = ExperimentConfig {
                environment,
                variants: Variant::all(),
                n: vec![5],
                iterations: 8,
                horizon: 10,
                lambda: 0.1,
                resets: true,
                seeds: (1..=5).collect(),
                ..Default::default()
            };
            out.extend(run_cells(&cfg).unwrap());
        }
        out
    })
}

fn vstar() -> f64 {
    let env = EnvironmentSpec::grid4().build().unwrap();
    env.mdp.as_product().unwrap().optimal_value(&env.mdp.initial_state(), 0.8).unwrap()
}

fn cells(variant: Variant, n: usize) -> Vec<&'static CellResult> {
    grid_runs().iter().filter(|c| c.key.variant == variant && c.key.n == n).collect()
}

fn finals(variant: Variant, n: usize) -> Vec<f64> {
    cells(variant, n).iter().map(|c| c.final_value()).collect()
}

#[test]
fn grid4_reproduction() {
    let vstar = vstar();
    let mut pass = (vstar - 2.733966075517511).abs() <= 1e-9;
    let mut detail = format!("V*={vstar:.6};");
    for check in [CheckKind::Naive, CheckKind::Egss, CheckKind::Dav] {
        let lspi = Variant { algorithm: Algorithm::Lspi, check };
        let politex = Variant { algorithm: Algorithm::Politex, check };
        let runs = cells(lspi, 50);
        let good = runs.iter().filter(|c| c.final_value() >= (1.0 - NEAR_OPTIMAL) * vstar).count();
        let hits: Vec<f64> = runs
            .iter()
            .map(|c| {
                c.rows.iter().find(|r| r.policy_value >= (1.0 - NEAR_OPTIMAL) * vstar).map_or(c.rows.len(), |r| r.iteration)
                    as f64
            })
            .collect();
        let (hit_mean, _) = mean_std(&hits);
        let (m50, _) = mean_std(&finals(lspi, 50));
        let (m10, s10) = mean_std(&finals(lspi, 10));
        let (_, p10) = mean_std(&finals(politex, 10));
        pass &= good >= MIN_GOOD_SEEDS && hit_mean <= MAX_MEAN_HIT_ITERATION && m10 < m50 && p10 < s10;
        detail += &format!(
            " {}: {good}/{SEEDS} near-optimal, mean hit iteration {hit_mean:.2}, final n=50 {m50:.4} vs n=10 {m10:.4}, std n=10 politex {p10:.4} vs lspi {s10:.4};",
            check.name()
        );
    }
    report("grid4 reproduction", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn check_equivalence() {
    let vstar = vstar();
    let mean = |check| mean_std(&finals(Variant { algorithm: Algorithm::Lspi, check }, 50)).0;
    let naive = mean(CheckKind::Naive);
    let egss = (mean(CheckKind::Egss) - naive).abs();
    let dav = (mean(CheckKind::Dav) - naive).abs();
    let pass = egss <= CHECK_GAP * vstar && dav <= CHECK_GAP * vstar;
    let detail = format!("|egss-naive|={egss:.5}, |dav-naive|={dav:.5}, limit {:.5}", CHECK_GAP * vstar);
    report("check equivalence", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn norm_sandwich() {
    let mut rng = stream(11, Stream::Environment);
    let mut violations = 0;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=12);
        let mut v = PrecisionState::new(d, rng.gen_range(1e-4..2.0)).unwrap();
        for _ in 0..rng.gen_range(0..20) {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            v.update(&x).unwrap();
        }
        let phi: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let quad = uncertainty_quad_form(&v, &phi).unwrap();
        let mut best = 0.0f64;
        for i in 0..d {
            for dir in [SignedBasis::positive(i), SignedBasis::negative(i)] {
                let x = dot(&whitened_infnorm_direction(&v, dir).unwrap(), &phi);
                best = best.max(x * x);
            }
        }
        if quad / d as f64 > best + SANDWICH_SLACK || best > quad + SANDWICH_SLACK {
            violations += 1;
        }
    }
    let detail = format!("{violations} violations in 1000 cases");
    report("norm sandwich", violations == 0, &detail);
    assert_eq!(violations, 0);
}

#[test]
fn coreset_bound() {
    let mut violations = 0;
    let mut runs = 0;
    for c in grid_runs().iter().chain(reset_runs()) {
        runs += 1;
        let s = &c.stats;
        let cmax = s.cmax.unwrap();
        let budget = s.budget.unwrap();
        if s.final_coreset_size > cmax.ceil() as usize || s.queries > budget || c.rows.iter().any(|r| r.queries > budget) {
            violations += 1;
        }
    }
    let restarts: usize = reset_runs().iter().map(|c| c.stats.restarts).sum();
    let detail = format!("{violations} violations over {runs} runs ({restarts} restarts in reset mode)");
    report("core-set bound", violations == 0, &detail);
    assert_eq!(violations, 0);
}

/// Exact `Q_π` for the second agent's policy `(b2, b3)` in the two absorbing
/// states; the first agent's choices do not affect the listed weights.
fn coordination_q(b2: usize, b3: usize, gamma: f64) -> Vec<(usize, Vec<usize>, f64)> {
    let mdp = coplan::mdp::CoordinationMdp;
    let values = evaluate_joint_policy(&mdp, gamma, &mut |s| {
        let second = match s[0] {
            1 => b2,
            2 => b3,
            _ => 0,
        };
        vec![(vec![0, second], 1.0)]
    })
    .unwrap();
    let mut out = Vec::new();
    for s in 0..3 {
        for a in joint_actions(&[2, 2]) {
            let q: f64 = mdp.outcomes(&[s], &a).iter().map(|(n, p, r)| p * (r + gamma * values[n[0]])).sum();
            out.push((s, a, q));
        }
    }
    out
}

#[test]
fn coordination_realizability() {
    let map = TableAdditiveMap::coordination();
    // (second agent's action in s2, in s3) → listed weights.
    let listed = [((0, 0), [0.0, 1.0]), ((0, 1), [0.0, 0.0]), ((1, 0), [1.0, 1.0]), ((1, 1), [1.0, 0.0])];
    let mut errors = Vec::new();
    for ((b2, b3), w) in listed {
        let err = coordination_q(b2, b3, 0.5)
            .iter()
            .map(|(s, a, q)| (dot(&w, &map.feature(&[*s], a)) - q).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let pass = errors.iter().all(|&e| e <= REALIZABILITY_TOL);
    let detail = format!("max |Q - wᵀφ| per listed weight (0,0),(0,1),(1,0),(1,1): {errors:?}");
    report("coordination realizability", pass, &detail);

    // Documented outcome: only (1, 0) is realized by its listed weights.
    assert!(errors[2] <= REALIZABILITY_TOL);
    for i in [0, 1, 3] {
        assert!(errors[i] >= 0.5, "{detail}");
    }
    // No weight vector at all realizes (0, 0): Q(s2, (·,1)) = γ·0 + 1 = 1
    // needs 2·w₁ = 1 while Q(s2, (·,0)) = 0 needs w₁ = 0.
    let q = coordination_q(0, 0, 0.5);
    let at = |s: usize, a: [usize; 2]| q.iter().find(|(x, b, _)| *x == s && b[..] == a).unwrap().2;
    assert_eq!(at(1, [0, 1]), 1.0);
    assert_eq!(at(1, [0, 0]), 0.0);
}

fn random_pair(rng: &mut impl Rng) -> (Arc<dyn AdditiveFeatureMap>, KernelCoreSet, CoreSet, Vec<usize>, f64) {
    let counts: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(2..=3)).collect();
    let d = rng.gen_range(2..=6);
    let map: Arc<dyn AdditiveFeatureMap> = Arc::new(TableAdditiveMap::random(rng, 3, &counts, d));
    let lambda = rng.gen_range(0.05..1.0);
    let tau = rng.gen_range(0.1..1.5);
    let h = reset(&EnvironmentSpec::Coordination, 0).unwrap().1;
    let mut kc = KernelCoreSet::new(Arc::new(LinearKernel(map.clone())), lambda).unwrap();
    let mut c = CoreSet::empty(d, tau, lambda).unwrap();
    for i in 0..rng.gen_range(0..8) {
        let s = vec![rng.gen_range(0..3)];
        let a: Vec<usize> = counts.iter().map(|&n| rng.gen_range(0..n)).collect();
        let q = rng.gen_range(-1.0..1.0);
        kc.add(h, &s, &a).unwrap();
        c.add(CoreElement::new(h, a.clone(), map.feature(&s, &a))).unwrap();
        kc.set_estimate(i, q);
        c.set_estimate(i, q);
    }
    (map, kc, c, counts, tau)
}

#[test]
fn kernel_linear_equivalence() {
    let mut rng = stream(12, Stream::Environment);
    let h = reset(&EnvironmentSpec::Coordination, 0).unwrap().1;
    let mut worst = [0.0f64; 4];
    let mut mismatched_checks = 0;
    for _ in 0..200 {
        let (map, kc, c, counts, tau) = random_pair(&mut rng);
        let w = c.fit().unwrap();
        let s = rng.gen_range(0..3);
        let a: Vec<usize> = counts.iter().map(|&n| rng.gen_range(0..n)).collect();
        let phi = map.feature(&[s], &a);
        worst[0] = worst[0].max((kernel_q_eval(&kc, &[s], &a).unwrap() - dot(&w, &phi)).abs());
        worst[1] = worst[1].max((kernel_uncertainty(&kc, &[s], &a) - c.uncertainty(&phi)).abs());
        let abar: Vec<usize> = counts.iter().map(|&n| rng.gen_range(0..n)).collect();
        let kd = check_kernel_dav(h, &[s], &kc, tau, &abar).unwrap();
        let fd = check_dav(h, &[s], &c, tau, &abar, &*map).unwrap();
        let same = match (&kd, &fd) {
            (coplan::uncertainty::CheckOutcome::Certain, coplan::uncertainty::CheckOutcome::Certain) => true,
            (coplan::uncertainty::CheckOutcome::Uncertain(x), coplan::uncertainty::CheckOutcome::Uncertain(y)) => {
                x.action == y.action
            }
            _ => false,
        };
        if !same {
            mismatched_checks += 1;
        }
        let logdet = c.precision().logdet() - c.dim() as f64 * c.lambda().ln();
        worst[2] = worst[2].max((info_gain(&kc) - logdet).abs());
    }
    worst[3] = mismatched_checks as f64;
    let pass = worst[..3].iter().all(|&e| e <= KERNEL_TOL) && mismatched_checks == 0;
    let detail = format!(
        "200 instances: max |Δq| {:.2e}, max |Δu| {:.2e}, max |Δgain| {:.2e}, {mismatched_checks} differing checks",
        worst[0], worst[1], worst[2]
    );
    report("kernel/linear equivalence", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn politex_factorized_sampling() {
    let mut rng = stream(13, Stream::Environment);
    let counts = [3usize, 3];
    let map = TableAdditiveMap::random(&mut rng, 1, &counts, 4);
    let weights: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let alpha = 1.5;
    let joint: Vec<Vec<usize>> = joint_actions(&counts).collect();
    let logits: Vec<f64> =
        joint.iter().map(|a| alpha * weights.iter().map(|w| dot(w, &map.feature(&[0], a))).sum::<f64>()).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
    let exact: Vec<f64> = logits.iter().map(|l| (l - top).exp() / z).collect();

    let samples = 100_000;
    let mut counts_seen = vec![0usize; joint.len()];
    let mut draw = stream(14, Stream::Policy);
    for _ in 0..samples {
        let a = politex_sample(&map, &weights, alpha, &[0], &mut draw).unwrap();
        counts_seen[joint.iter().position(|x| *x == a).unwrap()] += 1;
    }
    let tv: f64 =
        0.5 * exact.iter().zip(&counts_seen).map(|(p, &c)| (p - c as f64 / samples as f64).abs()).sum::<f64>();
    let pass = tv <= TV_TOL;
    let detail = format!("TV distance {tv:.5} over {samples} samples");
    report("politex factorized sampling", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn info_gain_bound() {
    let mut violations = 0;
    let mut insertions = 0;
    for c in grid_runs().iter().chain(reset_runs()) {
        let tau: f64 = 1.0;
        for rec in &c.insertions {
            insertions += 1;
            if (1.0 + tau).ln() * rec.size as f64 > rec.info_gain * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    let detail = format!("{violations} violations over {insertions} insertions");
    report("info gain vs core set", violations == 0, &detail);
    assert_eq!(violations, 0);
}

/// Re-derives every sub-inequality from the reported settings.
fn chain_holds(p: &coplan::planner::TheoremParameters) -> Vec<(String, f64, f64)> {
    let g = 1.0 - p.gamma;
    let m = p.agents as f64;
    let zeta = match p.variant.check() {
        CheckKind::Egss => p.dim.sqrt(),
        _ => 2.0 * m - 1.0,
    };
    let h = p.horizon as f64;
    let k = p.iterations as f64;
    let root = (p.tau * p.cmax).sqrt();
    let ridge = zeta * p.b * (p.lambda * p.tau).sqrt();
    let truncation = zeta * p.gamma.powf(h + 1.0) / g * root;
    let noise = zeta * p.theta * root;
    let mut out = Vec::new();
    if p.variant.algorithm() == Algorithm::Lspi {
        let c = 8.0 / (g * g);
        out.push(("8ζb√(λτ)/(1−γ)²".into(), c * ridge, p.kappa / 4.0));
        out.push(("8ζγ^(H+1)√(τC)/(1−γ)³".into(), c * truncation, p.kappa / 4.0));
        out.push(("8ζθ√(τC)/(1−γ)²".into(), c * noise, p.kappa / 4.0));
        out.push(("2γ^(K−1)/(1−γ)²".into(), 2.0 * p.gamma.powf(k - 1.0) / (g * g), p.kappa / 4.0));
    } else {
        let c = 4.0 / g;
        out.push(("4ζb√(λτ)/(1−γ)".into(), c * ridge, p.kappa / 6.0));
        out.push(("4ζγ^(H+1)√(τC)/(1−γ)²".into(), c * truncation, p.kappa / 6.0));
        out.push(("4ζθ√(τC)/(1−γ)".into(), c * noise, p.kappa / 6.0));
        let eta = ridge + truncation + noise;
        let regret = (1.0 / (g * g) + 2.0 * eta / g) * (2.0 * m * (p.max_actions as f64).ln() / k).sqrt();
        out.push(("mirror-descent regret".into(), regret, p.kappa / 2.0));
    }
    let n = p.rollouts as f64;
    out.push(("4KC²exp(−2θ²(1−γ)²n)".into(), 4.0 * k * p.cmax * p.cmax * (-2.0 * p.theta.powi(2) * g * g * n).exp(), p.delta));
    out
}

#[test]
fn parameter_calculator() {
    let mut rng = stream(15, Stream::Environment);
    let mut failures = Vec::new();
    let mut checked = 0;
    for case in 0..20 {
        let variant = TheoremVariant::ALL[case % TheoremVariant::ALL.len()];
        let kappa = rng.gen_range(0.01..1.0);
        let delta = rng.gen_range(0.001..0.5);
        let b = rng.gen_range(0.5..10.0);
        let gamma = rng.gen_range(0.5..0.95);
        let dim = rng.gen_range(1..=200) as f64;
        let agents = rng.gen_range(1..=8);
        let max_actions = rng.gen_range(2..=6);
        let p = theorem_parameters(variant, kappa, delta, b, gamma, dim, agents, 0.0, max_actions).unwrap();
        if !variant.is_kernel() {
            let e = std::f64::consts::E;
            let expected = e / (e - 1.0) * (1.0 + p.tau) / p.tau * dim * ((1.0 + 1.0 / p.tau).ln() + (1.0 + 1.0 / p.lambda).ln());
            assert!((p.cmax - expected).abs() <= 1e-9 * expected);
            assert_eq!(p.cmax, cmax_bound(dim as usize, p.tau, p.lambda).unwrap());
        }
        let reported = p.chain();
        let derived = chain_holds(&p);
        assert_eq!(reported.len(), derived.len());
        for ((name, lhs, rhs), r) in derived.iter().zip(&reported) {
            checked += 1;
            assert!((lhs - r.lhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            if *lhs > rhs * (1.0 + 1e-9) {
                failures.push(format!("{variant:?} {name}: {lhs} > {rhs}"));
            }
        }
    }
    let pass = failures.is_empty();
    let detail = format!("{checked} sub-inequalities over 20 inputs, {} violated {failures:?}", failures.len());
    report("parameter calculator", pass, &detail);
    assert!(pass, "{detail}");
}
