//! Binary-tree mechanism for continual release of noisy vector prefix sums.
//!
//! Leaves are labelled `0..2^h - 1` with `h = ceil(log2 T)`; the tree is built
//! over the next power of two and leaves past `T` are never written. Every
//! node is seeded with one noise vector at construction. Release `t` adds the
//! stream element to all `h + 1` ancestors of leaf `t - 1`, then sums the
//! stored nodes whose parent and right sibling are ancestors of leaf `t`
//! (the root alone when `t = 2^h`), and pads with fresh draws so that every
//! release carries exactly `h` noise vectors.

use crate::error::{check_dim, invalid, Error, Result};
use crate::point::Point;
use crate::randomness::{NoiseSpec, RandomSource};

/// Noise accounting of one release.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReleaseStats {
    pub t: usize,
    /// Pre-seeded tree nodes summed into the release.
    pub stored_nodes: usize,
    /// Noise vectors drawn at release time.
    pub fresh_draws: usize,
}

impl ReleaseStats {
    pub fn noise_terms(&self) -> usize {
        self.stored_nodes + self.fresh_draws
    }
}

#[derive(Debug, Clone)]
pub struct TreeAggregator {
    horizon: usize,
    depth: usize,
    dimension: usize,
    noise: NoiseSpec,
    nodes: Vec<Point>,
    released: usize,
    src: RandomSource,
    last: Option<ReleaseStats>,
}

/// `ceil(log2 t)` for `t >= 1`.
pub fn ceil_log2(t: usize) -> usize {
    t.next_power_of_two().trailing_zeros() as usize
}

impl TreeAggregator {
    /// Builds the tree and returns it with the initial release `L_0`, a sum of
    /// `ceil(log2 T)` fresh noise vectors.
    pub fn init(
        horizon: usize,
        dimension: usize,
        noise: NoiseSpec,
        mut src: RandomSource,
    ) -> Result<(Self, Point)> {
        if horizon == 0 || dimension == 0 {
            return Err(invalid("tree needs a positive horizon and dimension"));
        }
        check_dim(dimension, noise.dimension)?;
        if horizon == 1 && !noise.is_zero() {
            return Err(invalid("a horizon of 1 releases no noise; use T >= 2 when private"));
        }
        let depth = ceil_log2(horizon);
        let node_count = (2usize << depth) - 1;
        let nodes: Vec<Point> = (0..node_count).map(|_| src.sample_noise(&noise)).collect();
        let mut l0 = Point::zeros(dimension);
        for _ in 0..depth {
            l0.axpy(1.0, &src.sample_noise(&noise));
        }
        let agg = Self {
            horizon,
            depth,
            dimension,
            noise,
            nodes,
            released: 0,
            src,
            last: None,
        };
        Ok((agg, l0))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `ceil(log2 T)`, the number of noise vectors in every release.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn released(&self) -> usize {
        self.released
    }

    pub fn last_release(&self) -> Option<ReleaseStats> {
        self.last
    }

    /// Noise vectors drawn so far, including construction.
    pub fn noise_vectors_drawn(&self) -> u64 {
        self.src.noise_vectors_drawn()
    }

    fn node_index(depth: usize, prefix: usize) -> usize {
        (1usize << depth) - 1 + prefix
    }

    /// Nodes updated by element `t`: the leaf `t - 1` and all its ancestors.
    pub fn ancestors(&self, t: usize) -> Vec<usize> {
        let leaf = t - 1;
        (0..=self.depth)
            .map(|d| Self::node_index(d, leaf >> (self.depth - d)))
            .collect()
    }

    /// Nodes whose stored sums make up the prefix `1..=t`.
    pub fn cover(&self, t: usize) -> Vec<usize> {
        if t == 1 << self.depth {
            return vec![0];
        }
        (1..=self.depth)
            .filter_map(|d| {
                let prefix = t >> (self.depth - d);
                (prefix & 1 == 1).then(|| Self::node_index(d, prefix - 1))
            })
            .collect()
    }

    pub fn add_and_release(&mut self, element: &[f64], t: usize) -> Result<Point> {
        if t != self.released + 1 {
            return Err(Error::Sequence { expected: self.released + 1, got: t });
        }
        if t > self.horizon {
            return Err(invalid(format!("release {t} exceeds horizon {}", self.horizon)));
        }
        check_dim(self.dimension, element.len())?;
        if element.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("tree stream element".into()));
        }
        for i in self.ancestors(t) {
            self.nodes[i].axpy(1.0, element);
        }
        let cover = self.cover(t);
        let mut out = Point::zeros(self.dimension);
        for &i in &cover {
            out.axpy(1.0, &self.nodes[i]);
        }
        let fresh = self.depth.saturating_sub(cover.len());
        for _ in 0..fresh {
            out.axpy(1.0, &self.src.sample_noise(&self.noise));
        }
        self.released = t;
        self.last = Some(ReleaseStats { t, stored_nodes: cover.len(), fresh_draws: fresh });
        Ok(out)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Laplace scale `lambda = y1 ln(T) / eps` for pure privacy of the release
/// sequence. Natural log throughout.
pub fn calibrate_laplace(y1: f64, horizon: f64, epsilon: f64) -> Result<f64> {
    positive("l1 sensitivity", y1)?;
    positive("epsilon", epsilon)?;
    if !(horizon >= 2.0) {
        return Err(invalid("calibration needs a horizon of at least 2"));
    }
    Ok(y1 * horizon.ln() / epsilon)
}

/// Gaussian scale `sigma = (y2 / eps) ln(T) ln(ln(T) / delta)`.
pub fn calibrate_gaussian(y2: f64, horizon: f64, epsilon: f64, delta: f64) -> Result<f64> {
    positive("l2 sensitivity", y2)?;
    positive("epsilon", epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(horizon >= 2.0) {
        return Err(invalid("calibration needs a horizon of at least 2"));
    }
    let ln_t = horizon.ln();
    let sigma = y2 / epsilon * ln_t * (ln_t / delta).ln();
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(invalid(format!("delta {delta} too large for horizon {horizon}")))
    }
}
