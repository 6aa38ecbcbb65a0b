//! Value-only loss access and the one-point gradient estimator of the
//! ball-smoothed loss `f_hat(x) = E_{u ~ B} f(x + delta u)`.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{check_dim, invalid, Error, Result};
use crate::point::Point;
use crate::randomness::RandomSource;

/// `f(x) = curvature/2 ||x||^2 + <linear, x> + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub curvature: f64,
    pub linear: Point,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|a| a * a).sum();
        0.5 * self.curvature * sq + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &[f64]) -> Point {
        let mut g = self.linear.clone();
        g.axpy(self.curvature, x);
        g
    }
}

/// A convex, `L`-Lipschitz loss observed through its values.
pub trait Loss: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;
    fn lipschitz(&self) -> f64;
    fn value(&self, x: &[f64]) -> f64;

    /// Exact gradient where available; used only by comparators and tests.
    fn gradient(&self, _x: &[f64]) -> Option<Point> {
        None
    }

    /// Closed form when the loss is linear or isotropic quadratic.
    fn quadratic_form(&self) -> Option<QuadraticForm> {
        None
    }
}

/// Counting wrapper around a shared loss.
#[derive(Debug)]
pub struct LossOracle {
    loss: Arc<dyn Loss>,
    calls: AtomicU64,
}

impl LossOracle {
    pub fn new(loss: Arc<dyn Loss>) -> Self {
        Self { loss, calls: AtomicU64::new(0) }
    }

    pub fn dimension(&self) -> usize {
        self.loss.dimension()
    }

    pub fn lipschitz(&self) -> f64 {
        self.loss.lipschitz()
    }

    pub fn loss(&self) -> &Arc<dyn Loss> {
        &self.loss
    }

    /// Number of `query` calls made so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn query(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.loss.dimension(), x.len())?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let v = self.loss.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("loss value {v}")))
        }
    }
}

impl Clone for LossOracle {
    /// Clones share the loss but start a fresh call counter.
    fn clone(&self) -> Self {
        Self::new(self.loss.clone())
    }
}

/// `(n / delta) f(x + delta u) u`, unbiased for `grad f_hat(x)` when `u` is
/// uniform on the unit sphere.
pub fn one_point_gradient(f: &LossOracle, x: &[f64], delta: f64, u: &[f64]) -> Result<Point> {
    let n = f.dimension();
    check_dim(n, x.len())?;
    check_dim(n, u.len())?;
    if !(delta > 0.0) {
        return Err(invalid(format!("smoothing radius must be positive, got {delta}")));
    }
    let unorm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (unorm - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("direction must be a unit vector, norm {unorm}")));
    }
    let mut q = Point::from(x);
    q.axpy(delta, u);
    let scale = n as f64 / delta * f.query(&q)?;
    Ok(u.iter().map(|a| scale * a).collect())
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo estimate of `f_hat(x)` from `m` uniform ball samples.
pub fn smoothed_value(
    f: &LossOracle,
    x: &[f64],
    delta: f64,
    m: usize,
    src: &mut RandomSource,
) -> Result<Estimate> {
    let n = f.dimension();
    check_dim(n, x.len())?;
    if m == 0 || !(delta > 0.0) {
        return Err(invalid("need m >= 1 samples and a positive radius"));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..m {
        let u = src.sample_ball(n)?;
        let mut q = Point::from(x);
        q.axpy(delta, &u);
        let v = f.query(&q)?;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / m as f64;
    let var = if m > 1 {
        ((sum_sq - m as f64 * mean * mean) / (m as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate { mean, std_err: (var / m as f64).sqrt() })
}

/// Average of `m` one-point estimates with fresh sphere directions.
pub fn reference_smoothed_gradient(
    f: &LossOracle,
    x: &[f64],
    delta: f64,
    m: usize,
    src: &mut RandomSource,
) -> Result<Point> {
    if m == 0 {
        return Err(invalid("need m >= 1 samples"));
    }
    let n = f.dimension();
    let mut acc = Point::zeros(n);
    for _ in 0..m {
        let u = src.sample_sphere(n)?;
        acc.axpy(1.0, &one_point_gradient(f, x, delta, &u)?);
    }
    acc.scale_mut(1.0 / m as f64);
    Ok(acc)
}
