//! Online mirror descent (lazy / dual-averaging form) driven by noisy
//! gradient and noisy mirror-map oracles, with mirror map `1/2 ||x||^2`.
//!
//! Each step plays `x_t = NoisyMap(-eta s_{t-1})`, queries
//! `g_t = NoisyGrad(f_t, x_t)` and accumulates `s_t = s_{t-1} + g_t`.

use std::sync::Arc;

use crate::error::{check_dim, invalid, Result};
use crate::frank_wolfe;
use crate::geometry::{DecisionSet, DomainKind, LinearOracle};
use crate::point::Point;
use crate::randomness::RandomSource;
use crate::smoothing::Loss;

/// Stochastic gradient access with `E g = grad f_t(x)` and `E ||g||^2 <= kappa^2`.
pub trait NoisyGrad {
    fn kappa(&self) -> f64;
    fn query(&mut self, t: usize, x: &[f64]) -> Result<Point>;
}

/// Approximate `grad omega*` with `E ||grad omega*(g) - x|| <= gamma`.
pub trait NoisyMap {
    fn gamma(&self) -> f64;
    fn map(&mut self, g: &[f64]) -> Result<Point>;
}

/// `grad omega*(y) = argmax_{x in D} <y, x> - 1/2 ||x||^2`, the Euclidean
/// projection of `y`. Closed form on the l2 ball, `k_cg` conditional-gradient
/// steps everywhere else.
pub fn exact_mirror_map(domain: &DecisionSet, y: &[f64], k_cg: usize) -> Result<Point> {
    check_dim(domain.dimension(), y.len())?;
    match domain.kind() {
        DomainKind::L2Ball { radius } => {
            let p = Point::from(y);
            let norm = p.norm();
            Ok(if norm <= *radius { p } else { p.scaled(radius / norm) })
        }
        _ => Ok(frank_wolfe::solve(domain, y, k_cg)?.point),
    }
}

/// `omega*(y) = <y, x> - 1/2 ||x||^2` at `x = grad omega*(y)`.
pub fn conjugate_value(domain: &DecisionSet, y: &[f64], k_cg: usize) -> Result<f64> {
    let x = exact_mirror_map(domain, y, k_cg)?;
    Ok(x.dot(y) - 0.5 * x.norm_sq())
}

/// Mirror map computed by [`exact_mirror_map`]; declares `gamma = 0`.
#[derive(Debug, Clone)]
pub struct ExactMap {
    pub domain: DecisionSet,
    pub k_cg: usize,
}

impl NoisyMap for ExactMap {
    fn gamma(&self) -> f64 {
        0.0
    }

    fn map(&mut self, g: &[f64]) -> Result<Point> {
        exact_mirror_map(&self.domain, g, self.k_cg)
    }
}

/// True gradient plus a uniformly random direction of fixed length.
#[derive(Debug)]
pub struct PerturbedGradient {
    losses: Vec<Arc<dyn Loss>>,
    noise_radius: f64,
    gradient_bound: f64,
    src: RandomSource,
}

impl PerturbedGradient {
    /// `gradient_bound` must dominate `||grad f_t||` at every queried point.
    pub fn new(
        losses: Vec<Arc<dyn Loss>>,
        gradient_bound: f64,
        noise_radius: f64,
        src: RandomSource,
    ) -> Self {
        Self { losses, noise_radius, gradient_bound, src }
    }
}

impl NoisyGrad for PerturbedGradient {
    fn kappa(&self) -> f64 {
        (self.gradient_bound.powi(2) + self.noise_radius.powi(2)).sqrt()
    }

    fn query(&mut self, t: usize, x: &[f64]) -> Result<Point> {
        let loss = self
            .losses
            .get(t - 1)
            .ok_or_else(|| invalid(format!("no loss for step {t}")))?;
        let mut g = loss
            .gradient(x)
            .ok_or_else(|| invalid("loss exposes no gradient"))?;
        if self.noise_radius > 0.0 {
            let u = self.src.sample_sphere(x.len())?;
            g.axpy(self.noise_radius, &u);
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcoConfig {
    pub horizon: usize,
    /// Any `D_omega` with `max_{x in D} 1/2 ||x||^2 <= D_omega^2`.
    pub d_omega: f64,
    /// Multiplies the default rate `d_omega / (kappa sqrt(T))`.
    pub rate_multiplier: f64,
}

impl OcoConfig {
    pub fn new(horizon: usize, d_omega: f64) -> Self {
        Self { horizon, d_omega, rate_multiplier: 1.0 }
    }

    pub fn learning_rate(&self, kappa: f64) -> f64 {
        self.rate_multiplier * self.d_omega / (kappa * (self.horizon as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcoTrace {
    pub eta: f64,
    pub iterates: Vec<Point>,
    pub gradients: Vec<Point>,
    /// `s_0, ..., s_T`.
    pub dual_sums: Vec<Point>,
    /// `f_t(x_t)`.
    pub losses: Vec<f64>,
}

impl OcoTrace {
    pub fn cumulative_loss(&self) -> f64 {
        self.losses.iter().sum()
    }

    /// Realized regret against a fixed comparator point.
    pub fn regret_against(&self, losses: &[Arc<dyn Loss>], comparator: &[f64]) -> f64 {
        let best: f64 = losses.iter().map(|f| f.value(comparator)).sum();
        self.cumulative_loss() - best
    }
}

pub fn run<G: NoisyGrad, M: NoisyMap>(
    config: &OcoConfig,
    grad: &mut G,
    map: &mut M,
    losses: &[Arc<dyn Loss>],
) -> Result<OcoTrace> {
    let horizon = config.horizon;
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if losses.len() != horizon {
        return Err(invalid(format!("expected {horizon} losses, got {}", losses.len())));
    }
    let kappa = grad.kappa();
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa must be positive"));
    }
    let n = losses[0].dimension();
    let eta = config.learning_rate(kappa);
    let mut sum = Point::zeros(n);
    let mut trace = OcoTrace {
        eta,
        iterates: Vec::with_capacity(horizon),
        gradients: Vec::with_capacity(horizon),
        dual_sums: vec![sum.clone()],
        losses: Vec::with_capacity(horizon),
    };
    for t in 1..=horizon {
        let x = map.map(&sum.scaled(-eta))?;
        check_dim(n, x.len())?;
        let g = grad.query(t, &x)?;
        check_dim(n, g.len())?;
        trace.losses.push(losses[t - 1].value(&x));
        sum.axpy(1.0, &g);
        trace.iterates.push(x);
        trace.gradients.push(g);
        trace.dual_sums.push(sum.clone());
    }
    Ok(trace)
}

/// `2 sqrt(T) kappa D_omega + sqrt(T) kappa D_omega / 2 + T kappa gamma`.
pub fn regret_bound(horizon: usize, kappa: f64, gamma: f64, d_omega: f64) -> f64 {
    let root = (horizon as f64).sqrt();
    2.0 * root * kappa * d_omega + 0.5 * root * kappa * d_omega + horizon as f64 * kappa * gamma
}
