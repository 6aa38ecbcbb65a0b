//! Decision sets accessed through a linear optimization oracle.
//!
//! Every set exposes `lmo(v) = argmin_{x in D} <v, x>` with deterministic
//! tie-breaking (lowest coordinate index wins; a zero direction behaves like
//! the first basis vector), its exact Euclidean diameter, and, where one
//! exists, the radius of an origin-centred ball it contains.

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::point::Point;
use crate::smoothing::Loss;

/// Block of coordinates of a partition matroid together with its rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatroidPart {
    pub size: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// Probability simplex `{x >= 0, sum x = 1}`.
    Simplex,
    /// `[0, side]^n`.
    Hypercube { side: f64 },
    L1Ball { radius: f64 },
    L2Ball { radius: f64 },
    /// Base polytope of a partition matroid over contiguous coordinate blocks:
    /// `x in [0,1]^n` with each block summing to its rank.
    PartitionMatroidBase { parts: Vec<MatroidPart> },
}

/// Anything that can minimise a linear function over a convex set.
pub trait LinearOracle {
    fn dimension(&self) -> usize;
    fn diameter(&self) -> f64;
    fn lmo(&self, v: &[f64]) -> Result<Point>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSet {
    dimension: usize,
    kind: DomainKind,
}

impl DecisionSet {
    pub fn new(dimension: usize, kind: DomainKind) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match &kind {
            DomainKind::Simplex => {}
            DomainKind::Hypercube { side } => positive("side", *side)?,
            DomainKind::L1Ball { radius } | DomainKind::L2Ball { radius } => {
                positive("radius", *radius)?
            }
            DomainKind::PartitionMatroidBase { parts } => {
                let total: usize = parts.iter().map(|p| p.size).sum();
                check_dim(dimension, total)?;
                if let Some(p) = parts.iter().find(|p| p.size == 0 || p.rank > p.size) {
                    return Err(invalid(format!(
                        "matroid part of size {} cannot have rank {}",
                        p.size, p.rank
                    )));
                }
            }
        }
        Ok(Self { dimension, kind })
    }

    pub fn simplex(n: usize) -> Result<Self> {
        Self::new(n, DomainKind::Simplex)
    }

    pub fn hypercube(n: usize, side: f64) -> Result<Self> {
        Self::new(n, DomainKind::Hypercube { side })
    }

    pub fn l1_ball(n: usize, radius: f64) -> Result<Self> {
        Self::new(n, DomainKind::L1Ball { radius })
    }

    pub fn l2_ball(n: usize, radius: f64) -> Result<Self> {
        Self::new(n, DomainKind::L2Ball { radius })
    }

    pub fn partition_matroid(parts: Vec<MatroidPart>) -> Result<Self> {
        let n = parts.iter().map(|p| p.size).sum();
        Self::new(n, DomainKind::PartitionMatroidBase { parts })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Radius `r` with `r * B_2^n` contained in the set, when such a ball exists.
    pub fn inner_radius(&self) -> Option<f64> {
        match &self.kind {
            DomainKind::L2Ball { radius } => Some(*radius),
            DomainKind::L1Ball { radius } => Some(radius / (self.dimension as f64).sqrt()),
            _ => None,
        }
    }

    /// Closed-form membership test with absolute tolerance `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dimension || x.iter().any(|a| !a.is_finite()) {
            return false;
        }
        match &self.kind {
            DomainKind::Simplex => {
                x.iter().all(|&a| a >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            DomainKind::Hypercube { side } => x.iter().all(|&a| a >= -tol && a <= side + tol),
            DomainKind::L1Ball { radius } => x.iter().map(|a| a.abs()).sum::<f64>() <= radius + tol,
            DomainKind::L2Ball { radius } => {
                x.iter().map(|a| a * a).sum::<f64>().sqrt() <= radius + tol
            }
            DomainKind::PartitionMatroidBase { parts } => {
                let mut start = 0;
                parts.iter().all(|p| {
                    let block = &x[start..start + p.size];
                    start += p.size;
                    block.iter().all(|&a| a >= -tol && a <= 1.0 + tol)
                        && (block.iter().sum::<f64>() - p.rank as f64).abs() <= tol
                })
            }
        }
    }
}

/// Index of the smallest entry; ties go to the lowest index.
fn argmin_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &a) in v.iter().enumerate().skip(1) {
        if a < v[best] {
            best = i;
        }
    }
    best
}

impl LinearOracle for DecisionSet {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn diameter(&self) -> f64 {
        let n = self.dimension as f64;
        match &self.kind {
            DomainKind::Simplex if self.dimension == 1 => 0.0,
            DomainKind::Simplex => 2f64.sqrt(),
            DomainKind::Hypercube { side } => side * n.sqrt(),
            DomainKind::L1Ball { radius } | DomainKind::L2Ball { radius } => 2.0 * radius,
            // Two bases of a block differ in at most 2 min(k, m - k) coordinates.
            DomainKind::PartitionMatroidBase { parts } => {
                let changed: usize = parts.iter().map(|p| 2 * p.rank.min(p.size - p.rank)).sum();
                (changed as f64).sqrt()
            }
        }
    }

    fn lmo(&self, v: &[f64]) -> Result<Point> {
        check_dim(self.dimension, v.len())?;
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("lmo direction".into()));
        }
        let n = self.dimension;
        let out = match &self.kind {
            DomainKind::Simplex => Point::basis(n, argmin_lowest(v)),
            DomainKind::Hypercube { side } => {
                v.iter().map(|&a| if a < 0.0 { *side } else { 0.0 }).collect()
            }
            DomainKind::L1Ball { radius } => {
                let mut best = 0;
                for (i, a) in v.iter().enumerate().skip(1) {
                    if a.abs() > v[best].abs() {
                        best = i;
                    }
                }
                let mut p = Point::zeros(n);
                p[best] = if v[best] < 0.0 { *radius } else { -*radius };
                p
            }
            DomainKind::L2Ball { radius } => {
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Point::basis(n, 0).scaled(-*radius)
                } else {
                    v.iter().map(|a| -radius * a / norm).collect()
                }
            }
            DomainKind::PartitionMatroidBase { parts } => {
                let mut p = Point::zeros(n);
                let mut start = 0;
                for part in parts {
                    let mut idx: Vec<usize> = (start..start + part.size).collect();
                    // Stable sort keeps lower indices first among equal weights.
                    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
                    for &i in idx.iter().take(part.rank) {
                        p[i] = 1.0;
                    }
                    start += part.size;
                }
                p
            }
        };
        Ok(out)
    }
}

/// Wraps an oracle and counts `lmo` invocations.
#[derive(Debug)]
pub struct CountingOracle<'a, O: ?Sized> {
    inner: &'a O,
    calls: Cell<usize>,
}

impl<'a, O: LinearOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<O: LinearOracle + ?Sized> LinearOracle for CountingOracle<'_, O> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn lmo(&self, v: &[f64]) -> Result<Point> {
        self.calls.set(self.calls.get() + 1);
        self.inner.lmo(v)
    }
}

/// `f'(x) = f((1 - delta/r) x)`: smoothing queries `x + delta u` of `f'`
/// with `x` in the set land inside the set when `r B_2^n` is contained in it.
#[derive(Debug, Clone)]
pub struct ShrunkLoss {
    inner: Arc<dyn Loss>,
    factor: f64,
}

impl ShrunkLoss {
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Point at which the wrapped loss is actually evaluated.
    pub fn evaluation_point(&self, x: &[f64]) -> Point {
        x.iter().map(|a| self.factor * a).collect()
    }
}

impl Loss for ShrunkLoss {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&self.evaluation_point(x))
    }

    fn gradient(&self, x: &[f64]) -> Option<Point> {
        self.inner
            .gradient(&self.evaluation_point(x))
            .map(|g| g.scaled(self.factor))
    }
}

/// `1 - delta / r` for a set containing `r B_2^n`; requires `0 < delta < r`.
pub fn shrink_factor(set: &DecisionSet, delta: f64) -> Result<f64> {
    let r = set.inner_radius().ok_or(Error::MissingInnerRadius)?;
    if !(delta > 0.0 && delta < r) {
        return Err(invalid(format!(
            "smoothing radius {delta} must lie in (0, {r})"
        )));
    }
    Ok(1.0 - delta / r)
}

pub fn shrink_wrap(set: &DecisionSet, loss: Arc<dyn Loss>, delta: f64) -> Result<ShrunkLoss> {
    check_dim(set.dimension(), loss.dimension())?;
    let factor = shrink_factor(set, delta)?;
    Ok(ShrunkLoss { inner: loss, factor })
}
