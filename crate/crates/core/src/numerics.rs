//! Flat weight-space vectors and the handful of BLAS-1 style operations the
//! optimizers are written in.
//!
//! Every quantity living in weight space (weights, gradients, residuals,
//! search directions, preconditioner diagonals) is a [`ParamVector`]. The
//! operations check lengths and refuse to produce non-finite values, so a
//! diverging run surfaces as an error at the first bad operation.

use std::ops::Index;

use crate::error::{Error, Result};

/// A flat vector over all model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wrap raw values, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("parameter vector entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// Wrap values that are already known to be finite.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise negation. Exact in IEEE arithmetic.
    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    /// Multiply every entry by `alpha`.
    pub fn scale(&self, alpha: f64) -> Result<Self> {
        finite_vec(self.0.iter().map(|v| alpha * v).collect(), "scale")
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<Self> {
        check_len(self, other)?;
        finite_vec(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
            "subtraction",
        )
    }

    /// Round every entry through single precision. Entries beyond the
    /// `f32` range are a numeric error.
    pub fn round_to_f32(&self) -> Result<Self> {
        Self::new(self.0.iter().map(|&v| v as f32 as f64).collect()).map_err(|_| Error::non_finite("single-precision rounding"))
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_len(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn finite_vec(values: Vec<f64>, op: &str) -> Result<ParamVector> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::non_finite(format!("{op} result entry {i}")));
    }
    Ok(ParamVector(values))
}

/// Inner product `Σ aᵢbᵢ`.
pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_len(a, b)?;
    let sum: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    if !sum.is_finite() {
        return Err(Error::non_finite("dot product"));
    }
    Ok(sum)
}

/// `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    check_len(x, y)?;
    finite_vec(
        x.0.iter().zip(&y.0).map(|(xi, yi)| alpha * xi + yi).collect(),
        "axpy",
    )
}

/// Elementwise product.
pub fn hadamard(a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    check_len(a, b)?;
    finite_vec(
        a.0.iter().zip(&b.0).map(|(x, y)| x * y).collect(),
        "hadamard",
    )
}

/// Elementwise `1 / max(aᵢ, floor)`.
///
/// Entries below `floor` (including negative ones) are clamped before
/// inversion, so the output always lies in `(0, 1/floor]`.
pub fn reciprocal_clamped(a: &ParamVector, floor: f64) -> ParamVector {
    assert!(
        floor > 0.0 && floor.is_finite(),
        "reciprocal floor must be positive, got {floor}"
    );
    ParamVector(a.0.iter().map(|&v| 1.0 / v.max(floor)).collect())
}
