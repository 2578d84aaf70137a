//! Preconditioned nonlinear conjugate gradient for large-batch training,
//! with the baselines, problems and experiment harness needed to compare it.

pub mod batching;
pub mod error;
pub mod harness;
pub mod linesearch;
pub mod numerics;
pub mod optimizers;
pub mod preconditioner;
pub mod problems;
pub mod schedule;

pub use error::{Error, Result};
pub use numerics::ParamVector;
pub use optimizers::{BetaRule, NlcgConfig, Optimizer, OptimizerKind, StepMetrics};
pub use problems::{BatchEval, Dataset, Problem, ProblemKind, Quadratic};
pub use schedule::{BatchRegime, ScheduleConfig};
