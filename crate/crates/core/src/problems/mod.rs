//! Differentiable objectives: loss and exact gradient for any mini-batch.

mod dataset;
mod models;
mod quadratic;

use std::sync::Arc;

pub use dataset::{load_csv_dataset, make_synthetic_classification, make_synthetic_split, Dataset};
pub use models::{Mlp, SoftmaxRegression};
pub use quadratic::{make_diagonal_quadratic, make_quadratic, Quadratic};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// Loss and gradient of the mean objective over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub loss: f64,
    pub gradient: ParamVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    LogisticRegression,
    Mlp,
}

/// An objective `L(w) = 1/|B| Σ_{i∈B} l(i, w)` over sample indices.
#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(Quadratic),
    LogisticRegression(SoftmaxRegression),
    Mlp(Mlp),
}

impl Problem {
    pub fn logistic(data: Arc<Dataset>) -> Self {
        Problem::LogisticRegression(SoftmaxRegression::new(data))
    }

    pub fn mlp(data: Arc<Dataset>, hidden: &[usize]) -> Result<Self> {
        Mlp::new(data, hidden).map(Problem::Mlp)
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::Quadratic(_) => ProblemKind::Quadratic,
            Problem::LogisticRegression(_) => ProblemKind::LogisticRegression,
            Problem::Mlp(_) => ProblemKind::Mlp,
        }
    }

    pub fn weight_count(&self) -> usize {
        match self {
            Problem::Quadratic(q) => q.dim(),
            Problem::LogisticRegression(m) => m.weight_count(),
            Problem::Mlp(m) => m.weight_count(),
        }
    }

    /// Number of samples the batch indices range over.
    pub fn num_samples(&self) -> usize {
        match self {
            Problem::Quadratic(q) => q.num_samples(),
            Problem::LogisticRegression(m) => m.dataset().num_samples(),
            Problem::Mlp(m) => m.dataset().num_samples(),
        }
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        match self {
            Problem::Quadratic(_) => None,
            Problem::LogisticRegression(m) => Some(m.dataset()),
            Problem::Mlp(m) => Some(m.dataset()),
        }
    }

    pub fn as_quadratic(&self) -> Option<&Quadratic> {
        match self {
            Problem::Quadratic(q) => Some(q),
            _ => None,
        }
    }

    /// Starting weights: zero for quadratics, Glorot-uniform for classifiers.
    pub fn init_weights(&self, seed: u64) -> ParamVector {
        let w = match self {
            Problem::Quadratic(q) => vec![0.0; q.dim()],
            Problem::LogisticRegression(m) => m.init_weights(seed),
            Problem::Mlp(m) => m.init_weights(seed),
        };
        ParamVector::from_finite(w)
    }

    /// Mean loss and exact gradient over `batch`.
    pub fn evaluate(&self, weights: &ParamVector, batch: &[usize]) -> Result<BatchEval> {
        let data = self.dataset().cloned();
        self.evaluate_with(data.as_deref(), weights, batch)
    }

    /// Loss over every sample of `data` (a held-out set, say) with this
    /// problem's model. For quadratics `data` is ignored and the full
    /// objective is used.
    pub fn full_loss_on(&self, weights: &ParamVector, data: &Dataset) -> Result<f64> {
        let all: Vec<usize> = (0..data.num_samples()).collect();
        self.evaluate_with(Some(data), weights, &all).map(|e| e.loss)
    }

    /// Loss over every sample of the problem's own data.
    pub fn full_loss(&self, weights: &ParamVector) -> Result<f64> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.evaluate(weights, &all).map(|e| e.loss)
    }

    fn evaluate_with(&self, data: Option<&Dataset>, weights: &ParamVector, batch: &[usize]) -> Result<BatchEval> {
        if weights.len() != self.weight_count() {
            return Err(Error::Dimension {
                expected: self.weight_count(),
                actual: weights.len(),
            });
        }
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let w = weights.as_slice();
        let (loss, gradient) = match (self, data) {
            (Problem::Quadratic(q), _) => q.evaluate(weights, batch)?,
            (Problem::LogisticRegression(m), Some(d)) => m.evaluate_on(d, w, batch)?,
            (Problem::Mlp(m), Some(d)) => m.evaluate_on(d, w, batch)?,
            _ => unreachable!("classifiers always carry a dataset"),
        };
        if !loss.is_finite() {
            return Err(Error::non_finite("batch loss"));
        }
        let gradient = ParamVector::new(gradient).map_err(|_| Error::non_finite("batch gradient"))?;
        Ok(BatchEval { loss, gradient })
    }

    /// Fraction of samples in `data` whose highest class score matches the
    /// label, ties broken toward the lowest class id.
    pub fn accuracy(&self, weights: &ParamVector, data: &Dataset) -> Result<f64> {
        if let Problem::Quadratic(_) = self {
            return Err(Error::Unsupported("accuracy of a quadratic objective".into()));
        }
        if weights.len() != self.weight_count() {
            return Err(Error::Dimension {
                expected: self.weight_count(),
                actual: weights.len(),
            });
        }
        let mut scores = vec![0.0; data.num_classes()];
        let mut correct = 0usize;
        for i in 0..data.num_samples() {
            match self {
                Problem::Quadratic(_) => unreachable!(),
                Problem::LogisticRegression(m) => m.scores(weights.as_slice(), data.sample(i), &mut scores),
                Problem::Mlp(m) => m.scores(weights.as_slice(), data.sample(i), &mut scores),
            }
            if models::argmax(&scores) == data.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.num_samples() as f64)
    }
}
