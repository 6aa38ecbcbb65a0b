use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Dense real vector; the currency of every oracle in the crate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    /// Standard basis vector `e_i` in `n` dimensions.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut p = Self::zeros(n);
        p.0[i] = 1.0;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.0.len(), other.len());
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|a| a.abs()).sum()
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Point {
        Point(self.0.iter().map(|x| a * x).collect())
    }

    pub fn scale_mut(&mut self, a: f64) {
        self.0.iter_mut().for_each(|x| *x *= a);
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &[f64]) {
        debug_assert_eq!(self.0.len(), x.len());
        for (s, xi) in self.0.iter_mut().zip(x) {
            *s += a * xi;
        }
    }

    pub fn add(&self, other: &[f64]) -> Point {
        let mut p = self.clone();
        p.axpy(1.0, other);
        p
    }

    pub fn sub(&self, other: &[f64]) -> Point {
        let mut p = self.clone();
        p.axpy(-1.0, other);
        p
    }

    /// Moves a fraction `step` of the way towards `target`.
    pub fn step_towards(&mut self, target: &[f64], step: f64) {
        for (s, t) in self.0.iter_mut().zip(target) {
            *s += step * (t - *s);
        }
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.to_vec())
    }
}

impl FromIterator<f64> for Point {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Point(iter.into_iter().collect())
    }
}
