//! Finite real vectors and a few distance helpers.

use alloc::vec::Vec;

use crate::error::CoreError;

/// A vector in R^d whose coordinates are all finite. Construction checks
/// finiteness once so downstream geometry never has to.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector {
    coords: Vec<f64>,
}

impl RealVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, CoreError> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::NonFinite);
        }
        Ok(RealVector { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        RealVector {
            coords: alloc::vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.coords.iter().map(|c| c * c).sum())
    }
}

impl core::ops::Deref for RealVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

impl core::ops::Index<usize> for RealVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

/// Squared Euclidean distance; panics on dimension mismatch in debug only,
/// callers validate dimensions at API boundaries.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(dist_sq(a, b))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
