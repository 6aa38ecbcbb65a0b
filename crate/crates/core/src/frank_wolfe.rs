//! Conditional gradient for `q(x) = 1/2 ||x||^2 - <v, x>` over a set reached
//! only through its linear optimization oracle.
//!
//! The minimiser is the Euclidean projection of `v`. With step size
//! `2/(t+2)` and `k` oracle calls the objective gap is at most `10 D^2 / k`,
//! and 1-strong convexity turns that into `||x_k - x*|| <= sqrt(20) D / sqrt(k)`.

use crate::error::{check_dim, invalid, Result};
use crate::geometry::LinearOracle;
use crate::point::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub point: Point,
    pub iterations: usize,
    /// `10 D^2 / k`
    pub gap_bound: f64,
    /// `sqrt(20) D / sqrt(k)`
    pub distance_bound: f64,
    /// Frank-Wolfe duality gap `<grad q(x), x - lmo(grad q(x))>` at the
    /// returned point, from the last oracle call.
    pub dual_gap: f64,
}

/// Objective `1/2 ||x||^2 - <v, x>`.
pub fn objective(v: &[f64], x: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| 0.5 * a * a - a * b).sum()
}

/// `k` conditional-gradient steps; exactly `k` calls to `oracle.lmo`.
///
/// The first call places the iterate at `lmo(-v)`, the step that full-step
/// conditional gradient would take from the origin. Subsequent steps use
/// `gamma_t = 2 / (t + 2)` for `t = 1..k-1`.
pub fn solve<O: LinearOracle + ?Sized>(oracle: &O, v: &[f64], k: usize) -> Result<CgResult> {
    check_dim(oracle.dimension(), v.len())?;
    if k == 0 {
        return Err(invalid("conditional gradient needs at least one iteration"));
    }
    let neg_v: Point = v.iter().map(|a| -a).collect();
    let mut x = oracle.lmo(&neg_v)?;
    // Gradient at the origin is -v, so the first duality gap is <-v, 0 - s>.
    let mut dual_gap = x.dot(v);
    for t in 1..k {
        let grad = x.sub(v);
        let s = oracle.lmo(&grad)?;
        dual_gap = grad.dot(&x) - grad.dot(&s);
        x.step_towards(&s, 2.0 / (t as f64 + 2.0));
    }
    let d = oracle.diameter();
    Ok(CgResult {
        point: x,
        iterations: k,
        gap_bound: 10.0 * d * d / k as f64,
        distance_bound: 20f64.sqrt() * d / (k as f64).sqrt(),
        dual_gap,
    })
}
