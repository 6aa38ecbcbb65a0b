//! Concrete convex losses used by adversaries, comparators and tests.

use std::fmt;
use std::sync::Arc;

use crate::point::Point;
use crate::smoothing::{Loss, QuadraticForm};

/// `<c, x> + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLoss {
    coef: Point,
    offset: f64,
}

impl LinearLoss {
    pub fn new(coef: Point, offset: f64) -> Self {
        Self { coef, offset }
    }

    pub fn coef(&self) -> &Point {
        &self.coef
    }
}

impl Loss for LinearLoss {
    fn dimension(&self) -> usize {
        self.coef.dim()
    }

    fn lipschitz(&self) -> f64 {
        self.coef.norm()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.coef.dot(x) + self.offset
    }

    fn gradient(&self, _x: &[f64]) -> Option<Point> {
        Some(self.coef.clone())
    }

    fn quadratic_form(&self) -> Option<QuadraticForm> {
        Some(QuadraticForm { curvature: 0.0, linear: self.coef.clone(), constant: self.offset })
    }
}

/// `curvature/2 ||x - center||^2 + offset`. The Lipschitz constant is declared
/// by the caller since it depends on the region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    center: Point,
    curvature: f64,
    offset: f64,
    lipschitz: f64,
}

impl QuadraticLoss {
    pub fn new(center: Point, curvature: f64, offset: f64, lipschitz: f64) -> Self {
        Self { center, curvature, offset, lipschitz }
    }

    pub fn center(&self) -> &Point {
        &self.center
    }
}

impl Loss for QuadraticLoss {
    fn dimension(&self) -> usize {
        self.center.dim()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.curvature * self.center.distance(x).powi(2) + self.offset
    }

    fn gradient(&self, x: &[f64]) -> Option<Point> {
        let mut g = Point::from(x).sub(&self.center);
        g.scale_mut(self.curvature);
        Some(g)
    }

    fn quadratic_form(&self) -> Option<QuadraticForm> {
        Some(QuadraticForm {
            curvature: self.curvature,
            linear: self.center.scaled(-self.curvature),
            constant: 0.5 * self.curvature * self.center.norm_sq() + self.offset,
        })
    }
}

/// `weight * ||x - center||_1`; piecewise linear, Lipschitz `weight * sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Distance {
    center: Point,
    weight: f64,
}

impl L1Distance {
    pub fn new(center: Point, weight: f64) -> Self {
        Self { center, weight }
    }
}

impl Loss for L1Distance {
    fn dimension(&self) -> usize {
        self.center.dim()
    }

    fn lipschitz(&self) -> f64 {
        self.weight * (self.center.dim() as f64).sqrt()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weight * self.center.iter().zip(x).map(|(c, a)| (a - c).abs()).sum::<f64>()
    }
}

/// `weight * ||x||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanNorm {
    dimension: usize,
    weight: f64,
}

impl EuclideanNorm {
    pub fn new(dimension: usize, weight: f64) -> Self {
        Self { dimension, weight }
    }
}

impl Loss for EuclideanNorm {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn lipschitz(&self) -> f64 {
        self.weight
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weight * x.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Adds a constant to another loss.
#[derive(Debug, Clone)]
pub struct OffsetLoss {
    inner: Arc<dyn Loss>,
    offset: f64,
}

impl OffsetLoss {
    pub fn new(inner: Arc<dyn Loss>, offset: f64) -> Self {
        Self { inner, offset }
    }
}

impl Loss for OffsetLoss {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.offset
    }

    fn gradient(&self, x: &[f64]) -> Option<Point> {
        self.inner.gradient(x)
    }

    fn quadratic_form(&self) -> Option<QuadraticForm> {
        self.inner.quadratic_form().map(|mut q| {
            q.constant += self.offset;
            q
        })
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Loss backed by a closure with a declared Lipschitz constant.
#[derive(Clone)]
pub struct FnLoss {
    dimension: usize,
    lipschitz: f64,
    f: Arc<ValueFn>,
}

impl FnLoss {
    pub fn new(
        dimension: usize,
        lipschitz: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { dimension, lipschitz, f: Arc::new(f) }
    }
}

impl fmt::Debug for FnLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLoss")
            .field("dimension", &self.dimension)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Loss for FnLoss {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
