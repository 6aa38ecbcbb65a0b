//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p privbandit-cli --test acceptance`.

use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use privbandit::bench_audit::{
    comparator_loss, concentration_check, fit_exponent, AdversarySpec, Experiment,
};
use privbandit::frank_wolfe::{objective, solve};
use privbandit::losses::{L1Distance, LinearLoss};
use privbandit::noisy_oco::{self, ExactMap, OcoConfig, PerturbedGradient};
use privbandit::privacy_audit::empirical_dp_test;
use privbandit::smoothing::{one_point_gradient, smoothed_value};
use privbandit::tree_agg::{ceil_log2, TreeAggregator};
use privbandit::{
    DecisionSet, FeasibilityMode, Loss, LossOracle, NoiseSpec, Point, Privacy, RandomSource,
};
use privbandit_cli::commands::run_single;
use privbandit_cli::config::ExperimentConfig;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

type Criterion = fn() -> Verdict;

/// 1. Zero-noise tree reproduces exact integer prefix sums bitwise.
fn tree_exactness() -> Verdict {
    let mut src = RandomSource::new(101);
    let mut mismatches = 0;
    let mut releases = 0;
    for t in [1usize, 2, 4, 8, 16, 31, 32] {
        let n = 3;
        let (mut tree, l0) = TreeAggregator::init(t, n, NoiseSpec::zero(n), RandomSource::new(0)).unwrap();
        if l0.iter().any(|&v| v != 0.0) {
            mismatches += 1;
        }
        let mut exact = vec![0i64; n];
        for r in 1..=t {
            let element: Vec<i64> = (0..n).map(|_| src.index(2001) as i64 - 1000).collect();
            for (e, x) in exact.iter_mut().zip(&element) {
                *e += x;
            }
            let as_f64: Vec<f64> = element.iter().map(|&x| x as f64).collect();
            let s = tree.add_and_release(&as_f64, r).unwrap();
            releases += 1;
            if s.iter().zip(&exact).any(|(a, &b)| a.to_bits() != (b as f64).to_bits()) {
                mismatches += 1;
            }
        }
    }
    verdict(mismatches == 0, format!("{releases} releases, {mismatches} mismatches"))
}

/// 2. Every release is built from exactly ceil(log2 T) noise vectors.
fn noise_count_structure() -> Verdict {
    let mut bad = Vec::new();
    for t in [4usize, 8, 16] {
        let h = ceil_log2(t);
        let noise = NoiseSpec::laplace(2, 1.0).unwrap();
        let (mut tree, _) = TreeAggregator::init(t, 2, noise, RandomSource::new(t as u64)).unwrap();
        // Construction: one vector per node plus h for the initial release.
        if tree.noise_vectors_drawn() != (tree.node_count() + h) as u64 {
            bad.push(format!("T={t}: init drew {}", tree.noise_vectors_drawn()));
        }
        for r in 1..=t {
            let before = tree.noise_vectors_drawn();
            tree.add_and_release(&[0.0, 0.0], r).unwrap();
            let stats = tree.last_release().unwrap();
            let fresh = tree.noise_vectors_drawn() - before;
            // Dyadic decomposition of [1, r] has popcount(r) blocks.
            let blocks = r.count_ones() as usize;
            if stats.noise_terms() != h || stats.stored_nodes != blocks || fresh as usize != h - blocks {
                bad.push(format!("T={t} r={r}: {stats:?}, fresh {fresh}"));
            }
        }
    }
    let detail = if bad.is_empty() {
        "all releases of T in {4, 8, 16} use exactly ceil(log2 T) vectors".to_string()
    } else {
        bad.join("; ")
    };
    verdict(bad.is_empty(), detail)
}

/// 3. Conditional-gradient gap on the l2 ball is at most 10 D^2 / k.
fn frank_wolfe_rate() -> Verdict {
    let radius = 1.5;
    let ball = DecisionSet::l2_ball(5, radius).unwrap();
    let d = 2.0 * radius;
    let mut src = RandomSource::new(303);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..20 {
        let v = src.sample_sphere(5).unwrap().scaled(4.0 * src.uniform());
        let norm = v.norm();
        let star = if norm <= radius { v.clone() } else { v.scaled(radius / norm) };
        for k in [10usize, 100, 1000] {
            let x = solve(&ball, &v, k).unwrap().point;
            let gap = objective(&v, &x) - objective(&v, &star);
            worst_ratio = worst_ratio.max(gap / (10.0 * d * d / k as f64));
        }
    }
    verdict(worst_ratio <= 1.0, format!("max gap / (10 D^2 / k) = {worst_ratio:.3e}"))
}

/// 4. Mean of one-point estimates matches the gradient of a linear loss.
fn estimator_unbiasedness() -> Verdict {
    let mut src = RandomSource::new(404);
    let m = 100_000;
    let delta = 0.5;
    let mut worst_z: f64 = 0.0;
    for n in [2usize, 8] {
        for _ in 0..5 {
            let c = src.sample_sphere(n).unwrap().scaled(0.5 + src.uniform());
            let f = LossOracle::new(Arc::new(LinearLoss::new(c.clone(), src.uniform())));
            let x = src.sample_ball(n).unwrap();
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            for _ in 0..m {
                let u = src.sample_sphere(n).unwrap();
                let g = one_point_gradient(&f, &x, delta, &u).unwrap();
                for i in 0..n {
                    sum[i] += g[i];
                    sum_sq[i] += g[i] * g[i];
                }
            }
            for i in 0..n {
                let mean = sum[i] / m as f64;
                let var = (sum_sq[i] - m as f64 * mean * mean) / (m as f64 - 1.0);
                let se = (var / m as f64).sqrt();
                worst_z = worst_z.max((mean - c[i]).abs() / se);
            }
        }
    }
    verdict(worst_z <= 4.0, format!("max |mean - grad| / SE = {worst_z:.2}"))
}

/// 5. Ball smoothing moves a piecewise-linear loss by at most delta L.
fn smoothing_bias() -> Verdict {
    let mut src = RandomSource::new(505);
    let mut worst: f64 = f64::NEG_INFINITY;
    let delta = 0.3;
    for i in 0..10 {
        let n = 2 + i % 4;
        let center = src.sample_ball(n).unwrap();
        let loss: Arc<dyn Loss> = Arc::new(L1Distance::new(center.clone(), 1.0 + src.uniform()));
        let l = loss.lipschitz();
        let f = LossOracle::new(loss.clone());
        // Points near the kinks, where the bias is largest.
        let x: Point = center.iter().map(|c| c + 0.1 * (src.uniform() - 0.5)).collect();
        let est = smoothed_value(&f, &x, delta, 100_000, &mut src).unwrap();
        let slack = (loss.value(&x) - est.mean).abs() - (delta * l + 3.0 * est.std_err);
        worst = worst.max(slack);
    }
    verdict(worst <= 0.0, format!("max |f - f_hat| - (delta L + 3 SE) = {worst:.3e}"))
}

fn fixed_linear_experiment(horizon: usize, privacy: Privacy) -> Experiment {
    Experiment {
        domain: DecisionSet::l2_ball(4, 1.0).unwrap(),
        adversary: AdversarySpec::fixed_linear(vec![1.0, -0.5, 0.25, 0.0], 1.0),
        horizon,
        privacy,
        feasibility: FeasibilityMode::EnlargedDomain,
        diameter: None,
        comparator_iterations: 1,
    }
}

/// 6. Non-private regret grows no faster than T^0.85.
fn regret_exponent() -> Verdict {
    let grid = [64usize, 256, 1024, 4096];
    let fit = fit_exponent(&grid, 20, |t, s| {
        let exp = fixed_linear_experiment(t, Privacy::None);
        Ok(exp.run(&RandomSource::for_experiment(606, s as u64))?.regret)
    });
    match fit {
        Ok(fit) => verdict(
            fit.slope <= 0.85,
            format!(
                "slope {:.4} +/- {:.4} (bootstrap 95%), mean regrets {:?}",
                fit.slope,
                fit.half_width,
                fit.mean_regrets.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>()
            ),
        ),
        Err(e) => verdict(false, format!("fit failed: {e}")),
    }
}

/// 7. Mirror descent with an exact map stays under its regret bound.
fn noisy_oco_bound() -> Verdict {
    let ball = DecisionSet::l2_ball(3, 1.0).unwrap();
    let d_omega = 0.5f64.sqrt();
    let (g_bound, radius) = (1.0, 1.0);
    let mut worst_ratio: f64 = 0.0;
    let mut details = Vec::new();
    for t in [64usize, 256, 1024] {
        let mut total = 0.0;
        let seeds = 20;
        for s in 0..seeds {
            let mut adv = RandomSource::for_experiment(707, s).child("adversary");
            let drift = Point::from([0.6, -0.3, 0.2]);
            let losses: Vec<Arc<dyn Loss>> = (0..t)
                .map(|_| {
                    let mut c = drift.clone();
                    c.axpy(0.5, &adv.sample_sphere(3).unwrap());
                    let c = c.scaled(g_bound / c.norm().max(g_bound));
                    Arc::new(LinearLoss::new(c, 0.0)) as Arc<dyn Loss>
                })
                .collect();
            let src = RandomSource::for_experiment(707, s).child("gradients");
            let mut grad = PerturbedGradient::new(losses.clone(), g_bound, radius, src);
            let mut map = ExactMap { domain: ball.clone(), k_cg: 1 };
            let trace = noisy_oco::run(&OcoConfig::new(t, d_omega), &mut grad, &mut map, &losses).unwrap();
            let best = comparator_loss(&losses, &ball, 1).unwrap();
            total += trace.cumulative_loss() - best.value;
        }
        let mean = total / seeds as f64;
        let kappa = (g_bound * g_bound + radius * radius).sqrt();
        let bound = noisy_oco::regret_bound(t, kappa, 0.0, d_omega);
        worst_ratio = worst_ratio.max(mean / bound);
        details.push(format!("T={t}: {mean:.2} <= {bound:.2}"));
    }
    verdict(worst_ratio <= 1.0, details.join(", "))
}

/// 8. Concentration bound holds with probability at least 1 - delta.
fn concentration() -> Verdict {
    let mut ok = true;
    let mut details = Vec::new();
    for (n, k) in [(8usize, 64usize), (16, 16), (4, 256)] {
        let r = concentration_check(n, k, 0.1, 1.0, 1000, &RandomSource::new(808)).unwrap();
        ok &= r.violation_rate <= 0.1;
        details.push(format!(
            "({n},{k}): rate {} max {:.1} bound {:.1}",
            r.violation_rate, r.max_observed, r.bound
        ));
    }
    verdict(ok, details.join("; "))
}

/// 9. Empirical privacy loss of the calibrated Laplace tree.
fn empirical_dp() -> Verdict {
    match empirical_dp_test(8, 0.5, 1.0, 1_000_000, &RandomSource::new(909)) {
        Ok(r) => verdict(
            r.epsilon_hat <= 0.6,
            format!(
                "eps_hat {:.4} (lambda {:.3}, {} bins, {} counted)",
                r.epsilon_hat, r.lambda, r.bins_used, r.bins_counted
            ),
        ),
        Err(e) => verdict(false, format!("test failed: {e}")),
    }
}

/// 10. Privacy noise costs regret, and the cost shrinks as epsilon grows.
fn private_sanity() -> Verdict {
    let seeds = 20u64;
    let mean_regret = |privacy: Privacy| -> Result<f64, String> {
        let exp = fixed_linear_experiment(1024, privacy);
        let comparator = exp.comparator().map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for s in 0..seeds {
            let r = exp
                .run_with(&comparator, &RandomSource::for_experiment(1010, s))
                .map_err(|e| e.to_string())?
                .regret;
            if !r.is_finite() {
                return Err(format!("non-finite regret at seed {s}"));
            }
            total += r;
        }
        Ok(total / seeds as f64)
    };
    let run = || -> Result<(f64, Vec<f64>), String> {
        let base = mean_regret(Privacy::None)?;
        let mut excess = Vec::new();
        for eps in [1.0, 2.0, 4.0] {
            excess.push(mean_regret(Privacy::Pure { epsilon: eps })? - base);
        }
        Ok((base, excess))
    };
    match run() {
        Ok((base, excess)) => {
            let ok = excess[0] > 0.0 && excess[0] > excess[1] && excess[1] > excess[2];
            verdict(
                ok,
                format!(
                    "zero-noise mean {base:.1}; excess at eps=1,2,4: {:.1}, {:.1}, {:.1}",
                    excess[0], excess[1], excess[2]
                ),
            )
        }
        Err(e) => verdict(false, e),
    }
}

/// 11. Same config and seed give byte-identical trace.csv.
fn determinism() -> Verdict {
    let config = r#"{
        "domain": {"kind": "simplex", "dimension": 4},
        "adversary": {"kind": "rotating_linear", "directions": [[1, 0, 0, 0], [0, 0, 1, -1]], "period": 7, "lipschitz": 1.0},
        "horizon": 256,
        "privacy": {"mode": "approx", "epsilon": 1.0, "delta": 1e-6},
        "comparator_iterations": 1
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["first", "second"] {
        let resolved = ExperimentConfig::parse(config).unwrap().resolve(Some(1111)).unwrap();
        let out = dir.path().join(name);
        run_single(&resolved, &out).unwrap();
        files.push(fs::read(out.join("trace.csv")).unwrap());
    }
    verdict(
        files[0] == files[1] && !files[0].is_empty(),
        format!("{} bytes, identical: {}", files[0].len(), files[0] == files[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, Criterion); 11] = [
        (1, "tree exactness", Duration::from_secs(1), tree_exactness),
        (2, "noise-count structure", Duration::from_secs(60), noise_count_structure),
        (3, "Frank-Wolfe rate", Duration::from_secs(1), frank_wolfe_rate),
        (4, "estimator unbiasedness", Duration::from_secs(10), estimator_unbiasedness),
        (5, "smoothing bias", Duration::from_secs(10), smoothing_bias),
        (6, "non-private regret exponent", Duration::from_secs(300), regret_exponent),
        (7, "noisy OCO regret bound", Duration::from_secs(60), noisy_oco_bound),
        (8, "concentration", Duration::from_secs(60), concentration),
        (9, "empirical DP", Duration::from_secs(60), empirical_dp),
        (10, "private-run sanity", Duration::from_secs(300), private_sanity),
        (11, "determinism", Duration::from_secs(60), determinism),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = v.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {id:>2} [{name}]: {} ({}; {:.3}s of {}s budget{})",
            if passed { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
