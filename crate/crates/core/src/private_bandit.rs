//! Batched private bandit loop.
//!
//! The horizon `T` is split into `T_r = sqrt(T)` rounds of `T_b = sqrt(T)`
//! plays. Round `R` plays `x_t = xc_{R-1} + delta u_t` around the current
//! centre, sums the one-point estimates `(n/delta) f_t(x_t) u_t` into `g_R`,
//! feeds `g_R` to the tree aggregator, and computes the next centre
//! `xc_R = argmin_{x in D} 1/2 ||x||^2 + eta <s_{R-1}, x>` by `T_b`
//! conditional-gradient steps from the *previous* release `s_{R-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::frank_wolfe;
use crate::geometry::{shrink_factor, CountingOracle, DecisionSet, LinearOracle};
use crate::point::Point;
use crate::privacy_audit;
use crate::randomness::{NoiseSpec, RandomSource};
use crate::smoothing::LossOracle;
use crate::tree_agg::{calibrate_laplace, TreeAggregator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Privacy {
    None,
    Pure { epsilon: f64 },
    Approx { epsilon: f64, delta: f64 },
}

impl Privacy {
    fn validate(&self) -> Result<()> {
        let eps_ok = |e: f64| e.is_finite() && e > 0.0;
        match *self {
            Privacy::None => Ok(()),
            Privacy::Pure { epsilon } if eps_ok(epsilon) => Ok(()),
            Privacy::Approx { epsilon, delta } if eps_ok(epsilon) && delta > 0.0 && delta < 1.0 => {
                Ok(())
            }
            _ => Err(invalid(format!("invalid privacy parameters {self:?}"))),
        }
    }
}

/// How perturbed plays are kept inside the loss domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityMode {
    /// Losses are defined on a neighbourhood of the set; plays may leave it.
    #[default]
    EnlargedDomain,
    /// Evaluate `f((1 - delta/r) x)` so every query lies in the set.
    ShrinkWrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub horizon: usize,
    pub rounds: usize,
    pub batch: usize,
    pub eta: f64,
    pub smoothing_radius: f64,
    pub dimension: usize,
    pub lipschitz: f64,
    pub diameter: f64,
    pub privacy: Privacy,
    pub noise: NoiseSpec,
    pub feasibility: FeasibilityMode,
}

impl BanditParams {
    pub fn with_feasibility(mut self, mode: FeasibilityMode) -> Self {
        self.feasibility = mode;
        self
    }

    /// Per-play bound `M_F = L D n / delta` on `|F_t|`.
    pub fn estimate_scale(&self) -> f64 {
        self.lipschitz * self.diameter * self.dimension as f64 / self.smoothing_radius
    }
}

/// Exact integer square root, if `t` is a perfect square.
pub fn perfect_sqrt(t: usize) -> Option<usize> {
    let r = (t as f64).sqrt().round() as usize;
    (r * r == t).then_some(r)
}

/// Largest perfect square not exceeding `t`.
pub fn round_down_to_square(t: usize) -> usize {
    let mut r = (t as f64).sqrt() as usize;
    while (r + 1) * (r + 1) <= t {
        r += 1;
    }
    while r * r > t {
        r -= 1;
    }
    r * r
}

/// Parameter schedule: `T_r = T_b = sqrt(T)`,
/// `eta = D / (T^{3/4} n^{1/2} L)`, `delta = D n^{1/2} / T^{1/4}`, and the
/// noise law calibrated for the requested privacy level.
pub fn schedule(
    horizon: usize,
    dimension: usize,
    lipschitz: f64,
    diameter: f64,
    privacy: Privacy,
) -> Result<BanditParams> {
    let root = perfect_sqrt(horizon)
        .filter(|&r| r >= 1)
        .ok_or_else(|| invalid(format!("horizon {horizon} is not a positive perfect square")))?;
    if dimension == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    for (name, v) in [("Lipschitz constant", lipschitz), ("diameter", diameter)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    privacy.validate()?;
    let t = horizon as f64;
    let n = dimension as f64;
    let mut params = BanditParams {
        horizon,
        rounds: root,
        batch: root,
        eta: diameter / (t.powf(0.75) * n.sqrt() * lipschitz),
        smoothing_radius: diameter * n.sqrt() / t.powf(0.25),
        dimension,
        lipschitz,
        diameter,
        privacy,
        noise: NoiseSpec::zero(dimension),
        feasibility: FeasibilityMode::default(),
    };
    params.noise = match privacy {
        Privacy::None => NoiseSpec::zero(dimension),
        Privacy::Pure { epsilon } => {
            if horizon < 2 {
                return Err(invalid("private runs need a horizon of at least 2"));
            }
            let y1 = privacy_audit::sensitivity_l1(&params).first_principles;
            NoiseSpec::laplace(dimension, calibrate_laplace(y1, t, epsilon)?)?
        }
        Privacy::Approx { epsilon, delta } => {
            if horizon < 2 {
                return Err(invalid("private runs need a horizon of at least 2"));
            }
            let scales = privacy_audit::gaussian_scales(&params, epsilon, delta)?;
            NoiseSpec::gaussian(dimension, scales.max())?
        }
    };
    Ok(params)
}

/// `kappa^2 = T_b (L D n / delta)^2 + T_b^2 L^2`, a bound on `E ||g_R||^2`.
pub fn gradient_batch_norm_bound(params: &BanditParams) -> f64 {
    let b = params.batch as f64;
    b * params.estimate_scale().powi(2) + b * b * params.lipschitz.powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    /// `x_t = xc_{R-1} + delta u_t`.
    pub points: Vec<Point>,
    /// Multiplier applied to `x_t` before evaluation (1 unless shrink-wrapped).
    pub action_scale: f64,
    /// `f_t` at the evaluated point.
    pub losses: Vec<f64>,
    pub cumulative_loss: Vec<f64>,
    /// Round centres `xc_0 .. xc_{T_r - 1}`.
    pub centers: Vec<Point>,
    /// For centre `xc_R`, the index of the release it was computed from.
    pub center_sources: Vec<Option<usize>>,
    /// Batch gradient estimates `g_1 .. g_{T_r}`.
    pub batch_gradients: Vec<Point>,
    /// Tree releases `s_0 .. s_{T_r}`.
    pub dual_sums: Vec<Point>,
    pub noise_draws: u64,
    pub lmo_calls: usize,
    pub loss_queries: u64,
    pub releases: usize,
    /// Comparator total, filled by [`crate::bench_audit::regret`].
    pub comparator: Option<f64>,
    pub regret_curve: Vec<f64>,
}

impl RegretTrace {
    pub fn total_loss(&self) -> f64 {
        self.cumulative_loss.last().copied().unwrap_or(0.0)
    }

    /// Round (1-based) of step `t` (1-based).
    pub fn round_of(&self, t: usize, batch: usize) -> usize {
        (t - 1) / batch + 1
    }
}

fn solve_center<O: LinearOracle>(oracle: &O, release: &[f64], eta: f64, k: usize) -> Result<Point> {
    let v: Point = release.iter().map(|s| -eta * s).collect();
    Ok(frank_wolfe::solve(oracle, &v, k)?.point)
}

/// Runs the bandit loop against an oblivious loss sequence. Plays draw from
/// the child stream `"plays"` of `src`, tree noise from `"tree"`.
pub fn run(
    domain: &DecisionSet,
    losses: &[LossOracle],
    params: &BanditParams,
    src: &RandomSource,
) -> Result<RegretTrace> {
    let n = params.dimension;
    check_dim(n, domain.dimension())?;
    if losses.len() != params.horizon {
        return Err(invalid(format!(
            "expected {} losses, got {}",
            params.horizon,
            losses.len()
        )));
    }
    if params.rounds * params.batch != params.horizon || params.batch == 0 {
        return Err(invalid("horizon must equal rounds x batch"));
    }
    for f in losses {
        check_dim(n, f.dimension())?;
    }
    let delta = params.smoothing_radius;
    let action_scale = match params.feasibility {
        FeasibilityMode::EnlargedDomain => 1.0,
        FeasibilityMode::ShrinkWrap => shrink_factor(domain, delta)?,
    };

    let oracle = CountingOracle::new(domain);
    let mut plays = src.child("plays");
    let (mut tree, s0) = TreeAggregator::init(params.rounds, n, params.noise, src.child("tree"))?;
    let queries_before: u64 = losses.iter().map(LossOracle::calls).sum();

    let mut trace = RegretTrace {
        points: Vec::with_capacity(params.horizon),
        action_scale,
        losses: Vec::with_capacity(params.horizon),
        cumulative_loss: Vec::with_capacity(params.horizon),
        centers: Vec::with_capacity(params.rounds),
        center_sources: Vec::with_capacity(params.rounds),
        batch_gradients: Vec::with_capacity(params.rounds),
        dual_sums: vec![s0],
        noise_draws: 0,
        lmo_calls: 0,
        loss_queries: 0,
        releases: 0,
        comparator: None,
        regret_curve: Vec::new(),
    };

    let mut center = solve_center(&oracle, &Point::zeros(n), 0.0, params.batch)?;
    trace.centers.push(center.clone());
    trace.center_sources.push(None);
    let mut total = 0.0;
    let scale = n as f64 / delta;

    for round in 1..=params.rounds {
        let mut g = Point::zeros(n);
        for r in 1..=params.batch {
            let t = (round - 1) * params.batch + r;
            let u = plays.sample_sphere(n)?;
            let mut x = center.clone();
            x.axpy(delta, &u);
            let value = losses[t - 1].query(&x.scaled(action_scale))?;
            g.axpy(scale * value, &u);
            total += value;
            trace.points.push(x);
            trace.losses.push(value);
            trace.cumulative_loss.push(total);
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("batch gradient in round {round}")));
        }
        let release = tree.add_and_release(&g, round)?;
        trace.batch_gradients.push(g);
        trace.dual_sums.push(release);
        trace.releases += 1;
        // The centre computed here is played next round; the final round's
        // centre would never be played, so it is not computed.
        if round < params.rounds {
            center = solve_center(&oracle, &trace.dual_sums[round - 1], params.eta, params.batch)?;
            trace.centers.push(center.clone());
            trace.center_sources.push(Some(round - 1));
        }
    }

    trace.noise_draws = tree.noise_vectors_drawn();
    trace.lmo_calls = oracle.calls();
    trace.loss_queries = losses.iter().map(LossOracle::calls).sum::<u64>() - queries_before;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frank_wolfe::tests::project_l2_ball;
    use crate::losses::LinearLoss;
    use crate::smoothing::Loss;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn linear_losses(c: &[f64], offset: f64, horizon: usize) -> Vec<LossOracle> {
        let f: Arc<dyn Loss> = Arc::new(LinearLoss::new(Point::from(c), offset));
        (0..horizon).map(|_| LossOracle::new(f.clone())).collect()
    }

    #[test]
    fn schedule_example() {
        let p = schedule(256, 4, 1.0, 1.0, Privacy::None).unwrap();
        assert_eq!((p.rounds, p.batch), (16, 16));
        assert_abs_diff_eq!(p.eta, 0.0078125, epsilon = 1e-15);
        assert_abs_diff_eq!(p.smoothing_radius, 0.5, epsilon = 1e-15);
        assert!(p.noise.is_zero());

        let p = schedule(256, 4, 1.0, 1.0, Privacy::Pure { epsilon: 1.0 }).unwrap();
        assert_abs_diff_eq!(p.estimate_scale(), 8.0, epsilon = 1e-12);
        match p.noise.kind {
            crate::randomness::NoiseKind::Laplace { scale } => {
                assert_abs_diff_eq!(scale, 256.0 * 256f64.ln(), epsilon = 1e-9);
                assert!((scale - 1419.6).abs() < 0.1);
            }
            other => panic!("unexpected noise {other:?}"),
        }
    }

    #[test]
    fn schedule_identities_for_all_squares() {
        for k in 2..=256usize {
            let t = k * k;
            let p = schedule(t, 3, 2.0, 1.5, Privacy::None).unwrap();
            assert_eq!(p.rounds * p.batch, t);
            assert_eq!(p.rounds, k);
            let tf = t as f64;
            let eta = 1.5 / (tf.powf(0.75) * 3f64.sqrt() * 2.0);
            assert!((p.eta - eta).abs() <= 1e-15 * eta);
            let delta = 1.5 * 3f64.sqrt() / tf.powf(0.25);
            assert!((p.smoothing_radius - delta).abs() <= 1e-15 * delta);
        }
    }

    #[test]
    fn schedule_rejects_bad_input() {
        assert!(schedule(300, 4, 1.0, 1.0, Privacy::None).is_err());
        assert!(schedule(0, 4, 1.0, 1.0, Privacy::None).is_err());
        assert!(schedule(256, 4, 0.0, 1.0, Privacy::None).is_err());
        assert!(schedule(256, 4, 1.0, f64::NAN, Privacy::None).is_err());
        assert!(schedule(256, 4, 1.0, 1.0, Privacy::Pure { epsilon: 0.0 }).is_err());
        assert!(schedule(256, 4, 1.0, 1.0, Privacy::Approx { epsilon: 1.0, delta: 1.0 }).is_err());
        assert!(schedule(1, 4, 1.0, 1.0, Privacy::Pure { epsilon: 1.0 }).is_err());
        assert_eq!(round_down_to_square(300), 289);
        assert_eq!(round_down_to_square(289), 289);
        assert_eq!(round_down_to_square(3), 1);
    }

    #[test]
    fn kappa_squared() {
        let p = schedule(256, 4, 1.0, 1.0, Privacy::None).unwrap();
        assert_abs_diff_eq!(gradient_batch_norm_bound(&p), 1280.0, epsilon = 1e-9);
        let p = schedule(1, 2, 1.0, 1.0, Privacy::None).unwrap();
        let m = p.estimate_scale();
        assert_abs_diff_eq!(gradient_batch_norm_bound(&p), m * m + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_batch_norm_below_kappa() {
        let p = schedule(64, 3, 1.0, 2.0, Privacy::None).unwrap();
        let ball = DecisionSet::l2_ball(3, 1.0).unwrap();
        // Min-zero linear loss: <c, x> + 1 with ||c|| = 1.
        let f = LinearLoss::new(Point::from([0.6, 0.0, 0.8]), 1.0);
        let x = ball.lmo(&[1.0, 0.0, 0.0]).unwrap();
        let mut src = RandomSource::new(7);
        let m = 10_000;
        let mut mean_sq = 0.0;
        for _ in 0..m {
            let mut g = Point::zeros(3);
            for _ in 0..p.batch {
                let u = src.sample_sphere(3).unwrap();
                g.axpy(3.0 / p.smoothing_radius * f.value(&x.add(&u.scaled(p.smoothing_radius))), &u);
            }
            mean_sq += g.norm_sq() / m as f64;
        }
        assert!(mean_sq <= gradient_batch_norm_bound(&p), "{mean_sq}");
    }

    #[test]
    fn minimal_instance_accounting() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        let p = schedule(4, 2, 1.0, 2.0, Privacy::None).unwrap();
        let losses = linear_losses(&[1.0, 0.0], 1.0, 4);
        let trace = run(&ball, &losses, &p, &RandomSource::new(1)).unwrap();
        assert_eq!(trace.loss_queries, 4);
        assert_eq!(trace.releases, 2);
        assert_eq!(trace.lmo_calls, 2 * p.batch);
        assert_eq!(trace.noise_draws, 0);
        assert!(losses.iter().all(|f| f.calls() == 1));
    }

    #[test]
    fn plays_sit_on_the_smoothing_sphere() {
        let ball = DecisionSet::l2_ball(3, 1.0).unwrap();
        let p = schedule(64, 3, 1.0, 2.0, Privacy::Pure { epsilon: 1.0 }).unwrap();
        let losses = linear_losses(&[0.0, 1.0, 0.0], 1.0, 64);
        let trace = run(&ball, &losses, &p, &RandomSource::new(2)).unwrap();
        for (i, x) in trace.points.iter().enumerate() {
            let center = &trace.centers[i / p.batch];
            assert_abs_diff_eq!(x.distance(center), p.smoothing_radius, epsilon = 1e-12);
        }
        // One lmo call per step, amortised.
        assert_eq!(trace.lmo_calls, p.horizon);
        assert_eq!(trace.loss_queries as usize, p.horizon);
        assert!(trace.noise_draws > 0);
    }

    #[test]
    fn centres_only_use_stale_releases() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        let p = schedule(64, 2, 1.0, 2.0, Privacy::Pure { epsilon: 2.0 }).unwrap();
        let a = linear_losses(&[1.0, 0.0], 1.0, 64);
        // Same sequence through round 5, different afterwards.
        let changed = 5 * p.batch;
        let b: Vec<LossOracle> = (0..64)
            .map(|t| {
                if t < changed {
                    a[t].clone()
                } else {
                    let f: Arc<dyn Loss> = Arc::new(LinearLoss::new(Point::from([0.0, -1.0]), 1.0));
                    LossOracle::new(f)
                }
            })
            .collect();
        let src = RandomSource::new(3);
        let ta = run(&ball, &a, &p, &src).unwrap();
        let tb = run(&ball, &b, &p, &src).unwrap();
        // Round 6 (index 5) is the first that differs; its release feeds the
        // centre computed in round 7, i.e. xc_7.
        for r in 0..=6 {
            assert_eq!(ta.centers[r], tb.centers[r], "centre {r}");
        }
        assert_ne!(ta.centers[7], tb.centers[7]);
        for (r, src_idx) in ta.center_sources.iter().enumerate().skip(1) {
            assert_eq!(*src_idx, Some(r - 1));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        let p = schedule(144, 2, 1.0, 2.0, Privacy::Approx { epsilon: 1.0, delta: 1e-5 }).unwrap();
        let losses = linear_losses(&[0.3, 0.4], 0.5, 144);
        let a = run(&ball, &losses, &p, &RandomSource::new(9)).unwrap();
        let b = run(&ball, &losses, &p, &RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
        let c = run(&ball, &losses, &p, &RandomSource::new(10)).unwrap();
        assert_ne!(a.losses, c.losses);
    }

    #[test]
    fn noiseless_map_error_within_cg_bound() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        for seed in 0..5 {
            let p = schedule(256, 2, 1.0, 2.0, Privacy::None).unwrap();
            let losses = linear_losses(&[0.8, -0.6], 1.0, 256);
            let trace = run(&ball, &losses, &p, &RandomSource::new(seed)).unwrap();
            let cg = 20f64.sqrt() * p.diameter / (p.batch as f64).sqrt();
            let mut stale_sum = Point::zeros(2);
            for r in 1..p.rounds {
                // Centre played in round r + 1 versus the exact projection of
                // the gradients of rounds 1..r-1.
                let ideal = project_l2_ball(&stale_sum.scaled(-p.eta), 1.0);
                let err = trace.centers[r].distance(&ideal);
                assert!(err <= cg, "round {r}: {err}");
                stale_sum.axpy(1.0, &trace.batch_gradients[r - 1]);
            }
        }
    }

    #[test]
    fn shrink_wrap_keeps_queries_feasible() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        // delta = 2 sqrt(2) / T^{1/4} < 1 needs T > 64.
        let p = schedule(1024, 2, 1.0, 2.0, Privacy::None)
            .unwrap()
            .with_feasibility(FeasibilityMode::ShrinkWrap);
        let losses = linear_losses(&[1.0, 0.0], 1.0, 1024);
        let trace = run(&ball, &losses, &p, &RandomSource::new(4)).unwrap();
        for x in &trace.points {
            assert!(ball.contains(&x.scaled(trace.action_scale), 1e-12));
        }
        assert!(trace.losses.iter().all(|&v| v >= -1e-12));

        let too_small = schedule(64, 2, 1.0, 2.0, Privacy::None)
            .unwrap()
            .with_feasibility(FeasibilityMode::ShrinkWrap);
        let losses = linear_losses(&[1.0, 0.0], 1.0, 64);
        assert!(run(&ball, &losses, &too_small, &RandomSource::new(4)).is_err());
    }

    #[test]
    fn run_rejects_mismatched_inputs() {
        let ball = DecisionSet::l2_ball(2, 1.0).unwrap();
        let p = schedule(16, 2, 1.0, 2.0, Privacy::None).unwrap();
        assert!(run(&ball, &linear_losses(&[1.0, 0.0], 0.0, 15), &p, &RandomSource::new(0)).is_err());
        let ball3 = DecisionSet::l2_ball(3, 1.0).unwrap();
        assert!(run(&ball3, &linear_losses(&[1.0, 0.0], 0.0, 16), &p, &RandomSource::new(0)).is_err());
    }
}
