//! Seedable random sources and the privacy noise laws.
//!
//! A [`RandomSource`] is a ChaCha8 stream keyed by a 64-bit master seed. Child
//! streams are derived from `(master seed, label path)`: the key is the master
//! seed and the ChaCha stream id is the FNV-1a hash of the slash-joined label
//! path (for example `"experiment/3/tree"`). Components holding different
//! children never perturb each other's draw sequences.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::point::Point;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
    noise_vectors: u64,
}

impl RandomSource {
    /// Root stream for a master seed.
    pub fn new(seed: u64) -> Self {
        Self::with_label(seed, String::new())
    }

    fn with_label(seed: u64, label: String) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(label.as_bytes()));
        Self { seed, label, rng, noise_vectors: 0 }
    }

    /// Independent child stream. Depends only on the master seed and the label
    /// path, never on how many draws the parent has made.
    pub fn child(&self, label: &str) -> Self {
        let path = if self.label.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.label, label)
        };
        Self::with_label(self.seed, path)
    }

    /// Stream for experiment `index` of a sweep or seed fan-out.
    pub fn for_experiment(master: u64, index: u64) -> Self {
        Self::new(master).child(&format!("experiment/{index}"))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of non-zero noise vectors drawn through [`sample_noise`](Self::sample_noise).
    pub fn noise_vectors_drawn(&self) -> u64 {
        self.noise_vectors
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..bound`.
    pub fn index(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    /// Laplace(0, scale) by inverse CDF of exactly one open uniform.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        let p = self.uniform_open() - 0.5;
        -scale * p.signum() * (1.0 - 2.0 * p.abs()).ln()
    }

    /// Uniform direction on the unit sphere `S^{n-1}`, via a normalised Gaussian.
    pub fn sample_sphere(&mut self, n: usize) -> Result<Point> {
        if n == 0 {
            return Err(invalid("sphere dimension must be at least 1"));
        }
        loop {
            let g: Point = (0..n).map(|_| self.standard_normal()).collect();
            let norm = g.norm();
            if norm > 0.0 {
                return Ok(g.iter().map(|a| a / norm).collect());
            }
        }
    }

    /// Uniform point in the unit ball: a sphere direction scaled by `U^{1/n}`.
    pub fn sample_ball(&mut self, n: usize) -> Result<Point> {
        let mut u = self.sample_sphere(n)?;
        let radius = self.uniform().powf(1.0 / n as f64);
        u.scale_mut(radius);
        Ok(u)
    }

    /// One vector of i.i.d. coordinates from `spec`; `Zero` consumes no randomness.
    pub fn sample_noise(&mut self, spec: &NoiseSpec) -> Point {
        let n = spec.dimension;
        match spec.kind {
            NoiseKind::Zero => Point::zeros(n),
            NoiseKind::Laplace { scale } => {
                self.noise_vectors += 1;
                (0..n).map(|_| self.laplace(scale)).collect()
            }
            NoiseKind::Gaussian { std_dev } => {
                self.noise_vectors += 1;
                (0..n).map(|_| std_dev * self.standard_normal()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Zero,
    Laplace { scale: f64 },
    Gaussian { std_dev: f64 },
}

/// Coordinate-wise symmetric noise law over `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub dimension: usize,
}

impl NoiseSpec {
    pub fn zero(dimension: usize) -> Self {
        Self { kind: NoiseKind::Zero, dimension }
    }

    pub fn laplace(dimension: usize, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self { kind: NoiseKind::Laplace { scale }, dimension })
    }

    pub fn gaussian(dimension: usize, std_dev: f64) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev > 0.0) {
            return Err(invalid(format!("Gaussian std dev must be positive, got {std_dev}")));
        }
        Ok(Self { kind: NoiseKind::Gaussian { std_dev }, dimension })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NoiseKind::Zero)
    }

    /// Upper bound on `E ||X||` from the second moment: `sqrt(2n) * scale` for
    /// Laplace and `sqrt(n) * std_dev` for Gaussian.
    pub fn expected_norm(&self) -> f64 {
        let n = self.dimension as f64;
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::Laplace { scale } => (2.0 * n).sqrt() * scale,
            NoiseKind::Gaussian { std_dev } => n.sqrt() * std_dev,
        }
    }

    /// Per-coordinate variance.
    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::Laplace { scale } => 2.0 * scale * scale,
            NoiseKind::Gaussian { std_dev } => std_dev * std_dev,
        }
    }
}
