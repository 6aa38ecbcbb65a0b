//! Synthetic adversaries, offline comparators, regret curves, a Monte-Carlo
//! check of the vector concentration bound, and regret-exponent fits.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::frank_wolfe;
use crate::geometry::{DecisionSet, LinearOracle};
use crate::losses::{LinearLoss, QuadraticLoss};
use crate::par_map;
use crate::point::Point;
use crate::privacy_audit::concentration_bound;
use crate::private_bandit::{self, BanditParams, FeasibilityMode, Privacy, RegretTrace};
use crate::randomness::RandomSource;
use crate::smoothing::{Loss, LossOracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Same linear loss every step.
    FixedLinear { direction: Vec<f64> },
    /// Cycles through `directions`, switching every `period` steps.
    RotatingLinear { directions: Vec<Vec<f64>>, period: usize },
    /// `a/2 ||x - z||^2`, cycling through `centers` every `period` steps.
    Quadratic { centers: Vec<Vec<f64>>, period: usize },
}

/// Oblivious loss sequence. Every loss is convex, `lipschitz`-Lipschitz on
/// the decision set and attains the value 0 there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    #[serde(flatten)]
    pub kind: AdversaryKind,
    pub lipschitz: f64,
}

impl AdversarySpec {
    pub fn fixed_linear(direction: Vec<f64>, lipschitz: f64) -> Self {
        Self { kind: AdversaryKind::FixedLinear { direction }, lipschitz }
    }

    pub fn rotating_linear(directions: Vec<Vec<f64>>, period: usize, lipschitz: f64) -> Self {
        Self { kind: AdversaryKind::RotatingLinear { directions, period }, lipschitz }
    }

    pub fn quadratic(centers: Vec<Vec<f64>>, period: usize, lipschitz: f64) -> Self {
        Self { kind: AdversaryKind::Quadratic { centers, period }, lipschitz }
    }

    /// Generates `f_1, ..., f_T`; distinct losses are shared between steps.
    pub fn generate(&self, domain: &DecisionSet, horizon: usize) -> Result<Vec<Arc<dyn Loss>>> {
        let n = domain.dimension();
        let l = self.lipschitz;
        if !(l.is_finite() && l >= 0.0) {
            return Err(invalid(format!("Lipschitz constant must be non-negative, got {l}")));
        }
        let linear = |c: &[f64]| -> Result<Arc<dyn Loss>> {
            check_dim(n, c.len())?;
            let c = Point::from(c);
            let norm = c.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(invalid("linear adversary direction must be non-zero"));
            }
            let coef = c.scaled(l / norm);
            let min = coef.dot(&domain.lmo(&coef)?);
            Ok(Arc::new(LinearLoss::new(coef, -min)))
        };
        let (distinct, period): (Vec<Arc<dyn Loss>>, usize) = match &self.kind {
            AdversaryKind::FixedLinear { direction } => (vec![linear(direction)?], 1),
            AdversaryKind::RotatingLinear { directions, period } => {
                (directions.iter().map(|c| linear(c)).collect::<Result<_>>()?, *period)
            }
            AdversaryKind::Quadratic { centers, period } => {
                let d = domain.diameter();
                let a = if d > 0.0 { l / d } else { 0.0 };
                let qs = centers
                    .iter()
                    .map(|z| -> Result<Arc<dyn Loss>> {
                        check_dim(n, z.len())?;
                        if !domain.contains(z, 1e-9) {
                            return Err(invalid(format!("quadratic center {z:?} is outside the set")));
                        }
                        Ok(Arc::new(QuadraticLoss::new(Point::from(z.as_slice()), a, 0.0, l)))
                    })
                    .collect::<Result<_>>()?;
                (qs, *period)
            }
        };
        if distinct.is_empty() || period == 0 {
            return Err(invalid("adversary needs at least one loss and a positive period"));
        }
        Ok((0..horizon).map(|t| distinct[(t / period) % distinct.len()].clone()).collect())
    }
}

pub fn oracles(losses: &[Arc<dyn Loss>]) -> Vec<LossOracle> {
    losses.iter().map(|f| LossOracle::new(f.clone())).collect()
}

/// Best fixed point in hindsight (approximately, for curved sums).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparator {
    pub point: Point,
    /// `sum_t f_t(point)`; an upper bound on the true minimum.
    pub value: f64,
    /// `f_t(point)` for every step.
    pub per_step: Vec<f64>,
    /// `value - min` is at most this (0 when exact).
    pub certificate: f64,
    pub exact: bool,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `min_{x in D} sum_t f_t(x)`. Linear sums take one lmo call; isotropic
/// quadratic sums run `k_cg` conditional-gradient steps on the aggregate;
/// other losses fall back to conditional gradient on their exact gradients.
pub fn comparator_loss(
    losses: &[Arc<dyn Loss>],
    domain: &DecisionSet,
    k_cg: usize,
) -> Result<Comparator> {
    let n = domain.dimension();
    for f in losses {
        check_dim(n, f.dimension())?;
    }
    let forms: Option<Vec<_>> = losses.iter().map(|f| f.quadratic_form()).collect();
    let (point, certificate, exact) = match forms {
        Some(forms) => {
            let a: f64 = forms.iter().map(|q| q.curvature).sum();
            let mut b = Point::zeros(n);
            for q in &forms {
                b.axpy(1.0, &q.linear);
            }
            finite(a, "aggregate curvature")?;
            if !b.is_finite() {
                return Err(Error::NonFinite("aggregate linear term".into()));
            }
            if a == 0.0 {
                (domain.lmo(&b)?, 0.0, true)
            } else {
                // a (1/2 ||x||^2 - <v, x>) + const with v = -b / a.
                let v = b.scaled(-1.0 / a);
                let x = frank_wolfe::solve(domain, &v, k_cg)?.point;
                let mut g = b.clone();
                g.axpy(a, &x);
                let cert = duality_gap(domain, &x, &g)?;
                (x, cert, false)
            }
        }
        None => generic_minimize(losses, domain, k_cg)?,
    };
    let per_step = losses
        .iter()
        .map(|f| finite(f.value(&point), "loss value"))
        .collect::<Result<Vec<_>>>()?;
    let value = per_step.iter().sum();
    Ok(Comparator { point, value, per_step, certificate, exact })
}

fn generic_minimize(
    losses: &[Arc<dyn Loss>],
    domain: &DecisionSet,
    k: usize,
) -> Result<(Point, f64, bool)> {
    if k == 0 {
        return Err(invalid("comparator needs at least one iteration"));
    }
    let n = domain.dimension();
    let grad = |x: &Point| -> Result<Point> {
        let mut g = Point::zeros(n);
        for f in losses {
            let gi = f
                .gradient(x)
                .ok_or_else(|| invalid("comparator needs gradients for non-quadratic losses"))?;
            g.axpy(1.0, &gi);
        }
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::NonFinite("aggregate gradient".into()))
        }
    };
    let mut x = domain.lmo(&Point::zeros(n))?;
    for t in 0..k {
        let s = domain.lmo(&grad(&x)?)?;
        x.step_towards(&s, 2.0 / (t as f64 + 2.0));
    }
    let cert = duality_gap(domain, &x, &grad(&x)?)?;
    Ok((x, cert, false))
}

/// `<g, x - lmo(g)>`, an upper bound on `F(x) - min F` for convex `F` with
/// gradient `g` at `x`.
fn duality_gap(domain: &DecisionSet, x: &Point, g: &Point) -> Result<f64> {
    let s = domain.lmo(g)?;
    Ok((g.dot(x) - g.dot(&s)).max(0.0))
}

/// Fills the comparator and the cumulative regret curve; returns final regret.
pub fn regret(trace: &mut RegretTrace, comparator: &Comparator) -> Result<f64> {
    if comparator.per_step.len() != trace.losses.len() {
        return Err(invalid(format!(
            "comparator covers {} steps, trace has {}",
            comparator.per_step.len(),
            trace.losses.len()
        )));
    }
    let mut best = 0.0;
    trace.regret_curve = trace
        .cumulative_loss
        .iter()
        .zip(&comparator.per_step)
        .map(|(played, c)| {
            best += c;
            played - best
        })
        .collect();
    trace.comparator = Some(comparator.value);
    Ok(trace.total_loss() - comparator.value)
}

/// One complete bandit experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub domain: DecisionSet,
    pub adversary: AdversarySpec,
    pub horizon: usize,
    pub privacy: Privacy,
    #[serde(default)]
    pub feasibility: FeasibilityMode,
    /// Diameter used by the schedule; defaults to the set's diameter.
    #[serde(default)]
    pub diameter: Option<f64>,
    pub comparator_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub params: BanditParams,
    pub trace: RegretTrace,
    pub comparator: Comparator,
    pub regret: f64,
}

impl Experiment {
    pub fn params(&self) -> Result<BanditParams> {
        let d = self.diameter.unwrap_or_else(|| self.domain.diameter());
        Ok(private_bandit::schedule(
            self.horizon,
            self.domain.dimension(),
            self.adversary.lipschitz,
            d,
            self.privacy,
        )?
        .with_feasibility(self.feasibility))
    }

    pub fn losses(&self) -> Result<Vec<Arc<dyn Loss>>> {
        self.adversary.generate(&self.domain, self.horizon)
    }

    pub fn comparator(&self) -> Result<Comparator> {
        comparator_loss(&self.losses()?, &self.domain, self.comparator_iterations)
    }

    /// Runs with a precomputed comparator (it does not depend on the seed).
    pub fn run_with(&self, comparator: &Comparator, src: &RandomSource) -> Result<Outcome> {
        let params = self.params()?;
        let losses = self.losses()?;
        let mut trace = private_bandit::run(&self.domain, &oracles(&losses), &params, src)?;
        let regret = regret(&mut trace, comparator)?;
        Ok(Outcome { params, trace, comparator: comparator.clone(), regret })
    }

    pub fn run(&self, src: &RandomSource) -> Result<Outcome> {
        self.run_with(&self.comparator()?, src)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationResult {
    pub bound: f64,
    pub violation_rate: f64,
    pub max_observed: f64,
    pub trials: usize,
}

const POWER_ITERATIONS: usize = 50;
const POWER_START_SEED: u64 = 0x5eed;

/// Largest singular value of the `n x k` matrix with the given columns, by
/// power iteration on `Z Z^T` from a fixed start.
pub fn operator_norm(columns: &[Point], n: usize) -> f64 {
    let mut gram = vec![0.0; n * n];
    for u in columns {
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] += u[i] * u[j];
            }
        }
    }
    let mut v = RandomSource::new(POWER_START_SEED)
        .sample_sphere(n)
        .expect("dimension is positive");
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w: Point = (0..n).map(|i| (0..n).map(|j| gram[i * n + j] * v[j]).sum()).collect();
        lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = w.scaled(1.0 / lambda);
    }
    lambda.sqrt()
}

/// Fraction of trials in which `||Z|| * scale` exceeds the concentration
/// bound, where `Z` has `k` independent uniform unit columns. `||Z|| * scale`
/// is the worst case of `||sum_i u_i c_i||` over `||c|| <= scale`.
pub fn concentration_check(
    n: usize,
    k: usize,
    delta: f64,
    scale: f64,
    trials: usize,
    src: &RandomSource,
) -> Result<ConcentrationResult> {
    if trials < 100 {
        return Err(invalid("concentration check needs at least 100 trials"));
    }
    if n == 0 || k == 0 || !(delta > 0.0 && delta < 1.0) || !(scale > 0.0) {
        return Err(invalid("invalid concentration check parameters"));
    }
    let bound = concentration_bound(n, k, delta, scale);
    let norms = par_map(trials, |i| -> Result<f64> {
        let mut rng = src.child(&format!("trial/{i}"));
        let cols = (0..k).map(|_| rng.sample_sphere(n)).collect::<Result<Vec<_>>>()?;
        Ok(operator_norm(&cols, n) * scale)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let violations = norms.iter().filter(|&&z| z > bound).count();
    Ok(ConcentrationResult {
        bound,
        violation_rate: violations as f64 / trials as f64,
        max_observed: norms.iter().copied().fold(0.0, f64::max),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedRun {
    pub horizon: usize,
    pub seed: usize,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub grid: Vec<usize>,
    pub mean_regrets: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the central 95% bootstrap interval of the slope.
    pub half_width: f64,
    /// Runs dropped because their regret was zero, negative or non-finite.
    pub excluded: Vec<ExcludedRun>,
}

const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0xb007;

/// Ordinary least squares `(slope, intercept)` of `y` on `x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits `log(mean regret)` against `log T`. `runner(T, seed)` is called for
/// every grid point and seed index `0..seeds`, in parallel when enabled.
pub fn fit_exponent<F>(grid: &[usize], seeds: usize, runner: F) -> Result<ExponentFit>
where
    F: Fn(usize, usize) -> Result<f64> + Sync + Send,
{
    if grid.len() < 4 {
        return Err(invalid(format!(
            "exponent fit needs at least 4 grid points, got {}",
            grid.len()
        )));
    }
    if let Some(t) = grid.iter().find(|&&t| private_bandit::perfect_sqrt(t).is_none()) {
        return Err(invalid(format!("grid point {t} is not a perfect square")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != grid.len() {
        return Err(invalid("grid points must be distinct"));
    }
    if seeds < 10 {
        return Err(invalid(format!("exponent fit needs at least 10 seeds, got {seeds}")));
    }
    let results = par_map(grid.len() * seeds, |i| runner(grid[i / seeds], i % seeds));
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds); grid.len()];
    let mut excluded = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (g, seed) = (i / seeds, i % seeds);
        let r = r?;
        if r.is_finite() && r > 0.0 {
            samples[g].push(r);
        } else {
            excluded.push(ExcludedRun { horizon: grid[g], seed, regret: r });
        }
    }
    if let Some(g) = samples.iter().position(|s| s.len() < 2) {
        return Err(invalid(format!(
            "too few positive regrets at T = {} to fit an exponent",
            grid[g]
        )));
    }
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let std_errors = samples
        .iter()
        .zip(&means)
        .map(|(s, m)| {
            let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
            (var / s.len() as f64).sqrt()
        })
        .collect();
    let logt: Vec<f64> = grid.iter().map(|&t| (t as f64).ln()).collect();
    let logm: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = least_squares(&logt, &logm);

    let mut rng = RandomSource::new(BOOTSTRAP_SEED);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let y: Vec<f64> = samples
                .iter()
                .map(|s| {
                    let m = (0..s.len()).map(|_| s[rng.index(s.len())]).sum::<f64>() / s.len() as f64;
                    m.ln()
                })
                .collect();
            least_squares(&logt, &y).0
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let lo = slopes[BOOTSTRAP_RESAMPLES / 40];
    let hi = slopes[BOOTSTRAP_RESAMPLES - 1 - BOOTSTRAP_RESAMPLES / 40];
    Ok(ExponentFit {
        grid: grid.to_vec(),
        mean_regrets: means,
        std_errors,
        slope,
        intercept,
        half_width: (hi - lo) / 2.0,
        excluded,
    })
}
