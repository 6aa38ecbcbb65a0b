//! The `run`, `sweep` and `audit` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use privbandit::bench_audit::{
    concentration_check, fit_exponent, Comparator, ConcentrationResult, ExponentFit, Outcome,
};
use privbandit::privacy_audit::{calibration_report, empirical_dp_test, CalibrationReport, DpTestResult};
use privbandit::tree_agg::{ceil_log2, TreeAggregator};
use privbandit::{BanditParams, NoiseSpec, Point, RandomSource};
use serde::Serialize;

use crate::config::{experiment_for, Resolved};
use crate::output::{float, Bundle};

pub const TRACE_HEADER: &str = "t,round,loss,cumulative_loss,cumulative_regret";

pub fn trace_csv(outcome: &Outcome) -> String {
    let trace = &outcome.trace;
    let mut out = String::with_capacity(96 * (trace.losses.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (i, loss) in trace.losses.iter().enumerate() {
        let t = i + 1;
        let _ = writeln!(
            out,
            "{t},{},{},{},{}",
            trace.round_of(t, outcome.params.batch),
            float(*loss),
            float(trace.cumulative_loss[i]),
            float(trace.regret_curve[i])
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub requested_horizon: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub experiment_index: u64,
    pub params: &'a BanditParams,
    pub final_regret: f64,
    pub total_loss: f64,
    pub comparator_value: f64,
    pub comparator_certificate: f64,
    pub comparator_exact: bool,
    pub comparator_point: &'a Point,
    pub lmo_calls: usize,
    pub loss_queries: u64,
    pub noise_draws: u64,
    pub releases: usize,
    pub calibration: CalibrationReport,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_time_seconds: f64,
}

/// Single run for experiment index 0. Writes `trace.csv`, `summary.json`
/// and `timing.json`; wall time is kept apart so the other two files are
/// byte-identical across repeated runs.
pub fn run_single(resolved: &Resolved, out: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let exp = &resolved.experiment;
    let master = resolved.config.seeds.master;
    let outcome = exp.run(&RandomSource::for_experiment(master, 0))?;
    let summary = Summary {
        requested_horizon: resolved.requested_horizon,
        horizon: exp.horizon,
        master_seed: master,
        experiment_index: 0,
        params: &outcome.params,
        final_regret: outcome.regret,
        total_loss: outcome.trace.total_loss(),
        comparator_value: outcome.comparator.value,
        comparator_certificate: outcome.comparator.certificate,
        comparator_exact: outcome.comparator.exact,
        comparator_point: &outcome.comparator.point,
        lmo_calls: outcome.trace.lmo_calls,
        loss_queries: outcome.trace.loss_queries,
        noise_draws: outcome.trace.noise_draws,
        releases: outcome.trace.releases,
        calibration: calibration_report(&outcome.params)?,
    };
    let mut bundle = Bundle::default();
    bundle.add("trace.csv", trace_csv(&outcome));
    bundle.add_json("summary.json", &summary)?;
    bundle.add_json("timing.json", &Timing { wall_time_seconds: start.elapsed().as_secs_f64() })?;
    bundle.commit(out)?;
    Ok(outcome)
}

/// Grid sweep over horizons and seeds; writes `sweep.csv` and `fit.json`.
pub fn run_sweep(resolved: &Resolved, out: &Path) -> Result<ExponentFit> {
    let config = &resolved.config;
    let Some(grid) = config.grid.clone() else {
        bail!("sweep needs a `grid` of horizons in the config");
    };
    let seeds = config.seeds.count;
    let master = config.seeds.master;
    let fit = match config.synthetic_exponent {
        Some(p) => fit_exponent(&grid, seeds, |t, _| Ok((t as f64).powf(p)))?,
        None => {
            let mut experiments = Vec::with_capacity(grid.len());
            for &t in &grid {
                let exp = experiment_for(config, t)?;
                let comparator: Comparator = exp.comparator()?;
                experiments.push((exp, comparator));
            }
            fit_exponent(&grid, seeds, |t, s| {
                let g = grid.iter().position(|&x| x == t).expect("runner called with a grid point");
                let (exp, comparator) = &experiments[g];
                let src = RandomSource::for_experiment(master, (g * seeds + s) as u64);
                Ok(exp.run_with(comparator, &src)?.regret)
            })?
        }
    };
    let mut csv = String::from("T,mean_regret,stderr\n");
    for ((t, m), se) in fit.grid.iter().zip(&fit.mean_regrets).zip(&fit.std_errors) {
        let _ = writeln!(csv, "{t},{},{}", float(*m), float(*se));
    }
    let mut bundle = Bundle::default();
    bundle.add("sweep.csv", csv);
    bundle.add_json("fit.json", &fit)?;
    bundle.commit(out)?;
    Ok(fit)
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct ConcentrationCase {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub result: ConcentrationResult,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct NoiseStructure {
    pub rounds: usize,
    pub expected_terms_per_release: usize,
    pub terms_per_release: Vec<usize>,
    pub noise_draws: u64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct Exactness {
    pub rounds: usize,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct DpCheck {
    pub epsilon: f64,
    pub slack: f64,
    pub result: DpTestResult,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct AuditReport {
    pub horizon: usize,
    pub calibration: CalibrationReport,
    pub concentration: Vec<ConcentrationCase>,
    pub empirical_dp: DpCheck,
    pub noise_structure: NoiseStructure,
    pub exactness: Exactness,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

fn noise_structure(params: &BanditParams, src: RandomSource) -> Result<NoiseStructure> {
    let rounds = params.rounds;
    let n = params.dimension;
    let expected = if params.noise.is_zero() { 0 } else { ceil_log2(rounds) };
    let (mut tree, _) = TreeAggregator::init(rounds, n, params.noise, src)?;
    let zero = vec![0.0; n];
    let mut terms = Vec::with_capacity(rounds);
    for r in 1..=rounds {
        tree.add_and_release(&zero, r)?;
        let stats = tree.last_release().expect("a release was just made");
        terms.push(if params.noise.is_zero() { 0 } else { stats.noise_terms() });
    }
    let draws = tree.noise_vectors_drawn();
    let passed = terms.iter().all(|&c| c == expected) && (!params.noise.is_zero() || draws == 0);
    Ok(NoiseStructure {
        rounds,
        expected_terms_per_release: expected,
        terms_per_release: terms,
        noise_draws: draws,
        passed,
    })
}

fn exactness(params: &BanditParams) -> Result<Exactness> {
    let rounds = params.rounds;
    let n = params.dimension;
    let (mut tree, _) = TreeAggregator::init(rounds, n, NoiseSpec::zero(n), RandomSource::new(0))?;
    let mut exact = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for r in 1..=rounds {
        let element: Vec<f64> = (0..n).map(|i| ((r * 7 + i * 3) % 11) as f64 - 5.0).collect();
        for (e, x) in exact.iter_mut().zip(&element) {
            *e += x;
        }
        let s = tree.add_and_release(&element, r)?;
        for (a, b) in s.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Exactness { rounds, max_abs_error: worst, passed: worst == 0.0 })
}

/// Calibration, concentration, empirical privacy and tree-structure checks.
pub fn run_audit(resolved: &Resolved, out: &Path) -> Result<AuditReport> {
    let config = &resolved.config;
    let audit = &config.audit;
    let params = resolved.experiment.params()?;
    let root = RandomSource::for_experiment(config.seeds.master, 0).child("audit");
    let calibration = calibration_report(&params)?;

    let delta = audit.concentration_delta;
    let mut cases = vec![(8, 64), (16, 16), (4, 256)];
    if !cases.contains(&(params.dimension, params.batch)) {
        cases.push((params.dimension, params.batch));
    }
    let mut concentration = Vec::new();
    for (n, k) in cases {
        let src = root.child(&format!("concentration/{n}x{k}"));
        let result = concentration_check(n, k, delta, 1.0, audit.concentration_trials, &src)?;
        concentration.push(ConcentrationCase { n, k, delta, passed: result.violation_rate <= delta, result });
    }

    let dp = empirical_dp_test(audit.dp_horizon, audit.dp_epsilon, 1.0, audit.dp_trials, &root.child("dp"))?;
    let empirical_dp = DpCheck {
        epsilon: audit.dp_epsilon,
        slack: audit.dp_slack,
        passed: dp.epsilon_hat <= audit.dp_epsilon + audit.dp_slack,
        result: dp,
    };
    let noise_structure = noise_structure(&params, root.child("tree"))?;
    let exactness = exactness(&params)?;

    let mut checks = vec![Check { name: "calibration_conservative".into(), passed: calibration.conservative }];
    for c in &concentration {
        checks.push(Check { name: format!("concentration_{}x{}", c.n, c.k), passed: c.passed });
    }
    checks.push(Check { name: "empirical_dp".into(), passed: empirical_dp.passed });
    checks.push(Check { name: "noise_structure".into(), passed: noise_structure.passed });
    checks.push(Check { name: "tree_exactness".into(), passed: exactness.passed });
    let all_passed = checks.iter().all(|c| c.passed);
    let report = AuditReport {
        horizon: params.horizon,
        calibration,
        concentration,
        empirical_dp,
        noise_structure,
        exactness,
        checks,
        all_passed,
    };
    let mut bundle = Bundle::default();
    bundle.add_json("audit.json", &report)?;
    bundle.commit(out)?;
    Ok(report)
}

/// Default output directory when `--out` is not given.
pub fn default_out() -> PathBuf {
    PathBuf::from("out")
}
