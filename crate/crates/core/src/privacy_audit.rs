//! Sensitivity bounds, noise calibration cross-checks and an empirical
//! likelihood-ratio test of the Laplace tree mechanism.
//!
//! Two derivations of each sensitivity are carried side by side: one built
//! from the per-play bound `M_F = L D n / delta` and one following the
//! simplified closed forms. Schedules always calibrate from the larger.
//! Logarithms are natural throughout.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::par_map;
use crate::private_bandit::{BanditParams, Privacy};
use crate::randomness::{NoiseKind, NoiseSpec, RandomSource};
use crate::tree_agg::TreeAggregator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Sensitivity {
    /// `T_b sqrt(n) M_F`.
    pub first_principles: f64,
    /// `sqrt(T) n L`.
    pub paper_displayed: f64,
}

/// Worst-case l1 change of one batch gradient sum when one loss changes.
pub fn sensitivity_l1(params: &BanditParams) -> L1Sensitivity {
    let n = params.dimension as f64;
    L1Sensitivity {
        first_principles: params.batch as f64 * n.sqrt() * params.estimate_scale(),
        paper_displayed: (params.horizon as f64).sqrt() * n * params.lipschitz,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Sensitivity {
    pub delta0: f64,
    /// Scalar-vector bound `sqrt(T_b) M_F`.
    pub delta_conservative: f64,
    /// Per-entry bound `M_F`.
    pub delta_displayed: f64,
    pub conservative: f64,
    pub displayed: f64,
}

/// `10 D (ln((n+k)/d0) + sqrt((1 + k/n) ln((n+k)/d0)))`.
pub fn concentration_bound(n: usize, k: usize, delta0: f64, scale: f64) -> f64 {
    let n = n as f64;
    let k = k as f64;
    let l = ((n + k) / delta0).ln();
    10.0 * scale * (l + ((1.0 + k / n) * l).sqrt())
}

/// High-probability l2 bound on a batch sum `sum_i F_i u_i` with `T_b` terms.
pub fn sensitivity_l2_highprob(params: &BanditParams, delta0: f64) -> Result<L2Sensitivity> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(invalid(format!("delta0 must lie in (0, 1), got {delta0}")));
    }
    let m = params.estimate_scale();
    let dc = (params.batch as f64).sqrt() * m;
    let k = params.batch;
    let n = params.dimension;
    Ok(L2Sensitivity {
        delta0,
        delta_conservative: dc,
        delta_displayed: m,
        conservative: concentration_bound(n, k, delta0, dc),
        displayed: concentration_bound(n, k, delta0, m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianScales {
    pub sensitivity: L2Sensitivity,
    /// `M ln(T) ln(T / delta1) / eps` with the scalar-vector bound.
    pub from_conservative: f64,
    /// Same with the per-entry bound.
    pub from_displayed: f64,
    /// Closed form `T^{1/4} sqrt(n) L ln T ln(T/delta) / eps * (ln((n+T)/delta)
    /// + sqrt((1 + sqrt(T)/n) ln((n+T)/delta)))`.
    pub closed_form: f64,
}

impl GaussianScales {
    pub fn max(&self) -> f64 {
        self.from_conservative.max(self.from_displayed).max(self.closed_form)
    }
}

/// Failure budget split: `delta0 = delta / (2 sqrt T)` per batch, `delta1 = delta / 2`
/// for the Gaussian mechanism.
pub fn gaussian_scales(params: &BanditParams, epsilon: f64, delta: f64) -> Result<GaussianScales> {
    if !(epsilon.is_finite() && epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("invalid (epsilon, delta) = ({epsilon}, {delta})")));
    }
    let t = params.horizon as f64;
    let n = params.dimension as f64;
    let delta0 = delta / (2.0 * t.sqrt());
    let delta1 = delta / 2.0;
    let sens = sensitivity_l2_highprob(params, delta0)?;
    let factor = t.ln() * (t / delta1).ln() / epsilon;
    let l = ((n + t) / delta).ln();
    let closed_form = t.powf(0.25) * n.sqrt() * params.lipschitz * t.ln() * (t / delta).ln() / epsilon
        * (l + ((1.0 + t.sqrt() / n) * l).sqrt());
    Ok(GaussianScales {
        sensitivity: sens,
        from_conservative: sens.conservative * factor,
        from_displayed: sens.displayed * factor,
        closed_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Pure,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// `None` for non-private runs; every other field is then empty.
    pub regime: Option<Regime>,
    pub log_base: &'static str,
    pub l1: Option<L1Sensitivity>,
    pub lambda_first_principles: Option<f64>,
    pub lambda_displayed: Option<f64>,
    pub gaussian: Option<GaussianScales>,
    /// Scale actually used by the schedule.
    pub chosen: Option<f64>,
    /// The two derivations disagree by more than a relative `1e-9`.
    pub discrepancy: bool,
    /// `chosen >= max` over all variants.
    pub conservative: bool,
}

fn differs(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-9 * a.abs().max(b.abs())
}

pub fn calibration_report(params: &BanditParams) -> Result<CalibrationReport> {
    let mut report = CalibrationReport {
        regime: None,
        log_base: "natural",
        l1: None,
        lambda_first_principles: None,
        lambda_displayed: None,
        gaussian: None,
        chosen: None,
        discrepancy: false,
        conservative: true,
    };
    let chosen = match params.noise.kind {
        NoiseKind::Zero => None,
        NoiseKind::Laplace { scale } => Some(scale),
        NoiseKind::Gaussian { std_dev } => Some(std_dev),
    };
    let t = params.horizon as f64;
    match params.privacy {
        Privacy::None => {}
        Privacy::Pure { epsilon } => {
            let l1 = sensitivity_l1(params);
            let fp = l1.first_principles * t.ln() / epsilon;
            let displayed = l1.paper_displayed * t.ln() / epsilon;
            report.regime = Some(Regime::Pure);
            report.l1 = Some(l1);
            report.lambda_first_principles = Some(fp);
            report.lambda_displayed = Some(displayed);
            report.discrepancy = differs(fp, displayed);
            report.conservative = chosen.is_some_and(|c| c >= fp.max(displayed));
        }
        Privacy::Approx { epsilon, delta } => {
            let g = gaussian_scales(params, epsilon, delta)?;
            report.regime = Some(Regime::Approx);
            report.gaussian = Some(g);
            report.discrepancy = differs(g.from_conservative, g.from_displayed)
                || differs(g.from_conservative, g.closed_form);
            report.conservative = chosen.is_some_and(|c| c >= g.max());
        }
    }
    report.chosen = chosen;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpTestResult {
    pub epsilon_hat: f64,
    pub lambda: f64,
    pub trials: usize,
    /// Bins requested and bins actually used after widening.
    pub bins_requested: usize,
    pub bins_used: usize,
    /// Bins with at least the minimum count in both samples.
    pub bins_counted: usize,
    pub widened: bool,
}

const DP_BINS: usize = 50;
const MIN_BIN_COUNT: usize = 100;
const MIN_QUALIFYING_BINS: usize = 10;
const DP_CHUNKS: usize = 64;

/// Final releases of a scalar Laplace tree over `stream`, one per trial.
fn final_releases(stream: &[f64], lambda: f64, trials: usize, src: &RandomSource) -> Result<Vec<f64>> {
    let t = stream.len();
    let noise = NoiseSpec::laplace(1, lambda)?;
    let per = trials.div_ceil(DP_CHUNKS);
    let chunks = par_map(DP_CHUNKS, |c| -> Result<Vec<f64>> {
        let start = c * per;
        let end = trials.min(start + per);
        let mut out = Vec::with_capacity(end.saturating_sub(start));
        for trial in start..end {
            let noise_src = src.child(&format!("trial/{trial}"));
            let (mut tree, _) = TreeAggregator::init(t, 1, noise, noise_src)?;
            let mut last = 0.0;
            for (i, &x) in stream.iter().enumerate() {
                last = tree.add_and_release(&[x], i + 1)?[0];
            }
            out.push(last);
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(trials);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

fn ratio_statistic(a: &[f64], b: &[f64], bins: usize) -> (f64, usize) {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|i| pooled[i * pooled.len() / bins]).collect();
    let count = |xs: &[f64]| {
        let mut c = vec![0usize; bins];
        for &x in xs {
            c[edges.partition_point(|&e| e <= x)] += 1;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let mut worst: f64 = 0.0;
    let mut counted = 0;
    for (&p, &q) in ca.iter().zip(&cb) {
        if p >= MIN_BIN_COUNT && q >= MIN_BIN_COUNT {
            counted += 1;
            let r = ((p as f64 / a.len() as f64) / (q as f64 / b.len() as f64)).ln().abs();
            worst = worst.max(r);
        }
    }
    (worst, counted)
}

/// Likelihood-ratio test on the final release of two scalar streams that
/// differ by `shift` in their first element, at Laplace scale `lambda`.
pub fn ratio_test(
    horizon: usize,
    lambda: f64,
    shift: f64,
    trials: usize,
    src: &RandomSource,
) -> Result<DpTestResult> {
    if !(2..=16).contains(&horizon) {
        return Err(invalid(format!("ratio test supports 2 <= T <= 16, got {horizon}")));
    }
    if trials < 2 * MIN_BIN_COUNT {
        return Err(invalid(format!("need at least {} trials", 2 * MIN_BIN_COUNT)));
    }
    let base: Vec<f64> = (0..horizon).map(|i| (i % 3) as f64).collect();
    let mut neighbour = base.clone();
    neighbour[0] += shift;
    let a = final_releases(&base, lambda, trials, &src.child("base"))?;
    let b = final_releases(&neighbour, lambda, trials, &src.child("neighbour"))?;
    let mut bins = DP_BINS;
    loop {
        let (eps, counted) = ratio_statistic(&a, &b, bins);
        if counted >= MIN_QUALIFYING_BINS.min(bins) || bins == 1 {
            return Ok(DpTestResult {
                epsilon_hat: eps,
                lambda,
                trials,
                bins_requested: DP_BINS,
                bins_used: bins,
                bins_counted: counted,
                widened: bins != DP_BINS,
            });
        }
        bins = (bins / 2).max(1);
    }
}

/// Calibrates `lambda = y1 ln(T) / eps` and runs [`ratio_test`] with a
/// neighbouring stream shifted by `y1`.
pub fn empirical_dp_test(
    horizon: usize,
    epsilon: f64,
    y1: f64,
    trials: usize,
    src: &RandomSource,
) -> Result<DpTestResult> {
    if !(epsilon > 0.0 && y1 > 0.0) {
        return Err(invalid("epsilon and y1 must be positive"));
    }
    let lambda = y1 * (horizon as f64).ln() / epsilon;
    ratio_test(horizon, lambda, y1, trials, src)
}
