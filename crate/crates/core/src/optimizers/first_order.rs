use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConfig {
    pub momentum: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            rms_decay: 0.9,
            rms_epsilon: 1e-10,
        }
    }
}

impl FirstOrderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return Err(Error::InvalidConfig(format!("rms_decay must be in [0, 1), got {}", self.rms_decay)));
        }
        if !(self.rms_epsilon.is_finite() && self.rms_epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("rms_epsilon must be > 0, got {}", self.rms_epsilon)));
        }
        Ok(())
    }
}

/// Buffers for the gradient-only optimizers. Both start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderState {
    pub config: FirstOrderConfig,
    velocity: Vec<f64>,
    rms_accumulator: Vec<f64>,
}

impl FirstOrderState {
    pub fn new(n: usize, config: FirstOrderConfig) -> Self {
        Self {
            config,
            velocity: vec![0.0; n],
            rms_accumulator: vec![0.0; n],
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn rms_accumulator(&self) -> &[f64] {
        &self.rms_accumulator
    }

    fn check(&self, weights: &ParamVector, gradient: &ParamVector) -> Result<()> {
        for v in [weights, gradient] {
            if v.len() != self.velocity.len() {
                return Err(Error::Dimension {
                    expected: self.velocity.len(),
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// `w ← w − lr·g`.
pub fn sgd_step(state: &mut FirstOrderState, weights: &ParamVector, gradient: &ParamVector, lr: f64) -> Result<ParamVector> {
    state.check(weights, gradient)?;
    axpy(-lr, gradient, weights)
}

/// `v ← μv + g;  w ← w − lr·v`.
pub fn momentum_step(state: &mut FirstOrderState, weights: &ParamVector, gradient: &ParamVector, lr: f64) -> Result<ParamVector> {
    state.check(weights, gradient)?;
    let mu = state.config.momentum;
    for (v, g) in state.velocity.iter_mut().zip(gradient.iter()) {
        *v = mu * *v + g;
    }
    let velocity = ParamVector::new(state.velocity.clone()).map_err(|_| Error::non_finite("momentum buffer"))?;
    axpy(-lr, &velocity, weights)
}

/// `acc ← ρ·acc + (1−ρ)g²;  v ← μv + g/√(acc+ε);  w ← w − lr·v`.
pub fn rmsprop_step(state: &mut FirstOrderState, weights: &ParamVector, gradient: &ParamVector, lr: f64) -> Result<ParamVector> {
    state.check(weights, gradient)?;
    let FirstOrderConfig {
        momentum,
        rms_decay,
        rms_epsilon,
    } = state.config;
    for ((acc, v), &g) in state
        .rms_accumulator
        .iter_mut()
        .zip(state.velocity.iter_mut())
        .zip(gradient.iter())
    {
        *acc = rms_decay * *acc + (1.0 - rms_decay) * g * g;
        *v = momentum * *v + g / (*acc + rms_epsilon).sqrt();
    }
    let velocity = ParamVector::new(state.velocity.clone()).map_err(|_| Error::non_finite("rmsprop buffer"))?;
    axpy(-lr, &velocity, weights)
}
