//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use nlcg::optimizers::FirstOrderConfig;
use nlcg::problems::make_synthetic_classification;
use nlcg::{NlcgConfig, Optimizer, OptimizerKind, Problem};

/// 16 → 32 → 10 MLP on 8192 synthetic samples.
pub fn desk_mlp() -> Problem {
    let data = Arc::new(make_synthetic_classification(8192, 16, 10, 1.0, 0).expect("valid dataset"));
    Problem::mlp(data, &[32]).expect("valid layers")
}

pub fn optimizer(kind: OptimizerKind, n: usize) -> Optimizer {
    match kind.beta_rule() {
        Some(rule) => Optimizer::nlcg(NlcgConfig::new(rule)),
        None => Optimizer::first_order(kind, n, FirstOrderConfig::default()),
    }
    .expect("default configs are valid")
}

pub fn nlcg_fr() -> Optimizer {
    optimizer(OptimizerKind::NlcgFr, 0)
}
