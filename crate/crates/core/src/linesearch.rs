//! Online stochastic line search.
//!
//! Instead of searching along each direction, the optimizer keeps a
//! multiplicative scale on the scheduled learning rate and nudges it after
//! every step according to how the mini-batch loss moved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Relative loss rise above which the scale shrinks.
    pub increase_threshold: f64,
    /// Relative loss rise below which the scale grows.
    pub flat_threshold: f64,
    pub decrease_factor: f64,
    pub increase_factor: f64,
    pub enabled: bool,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            increase_threshold: 0.02,
            flat_threshold: 0.01,
            decrease_factor: 0.025,
            increase_factor: 0.025,
            enabled: true,
        }
    }
}

impl LineSearchConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_threshold = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok_threshold(self.flat_threshold)
            && ok_threshold(self.increase_threshold)
            && self.flat_threshold <= self.increase_threshold)
        {
            return Err(Error::InvalidConfig(format!(
                "line search thresholds need 0 <= flat ({}) <= increase ({})",
                self.flat_threshold, self.increase_threshold
            )));
        }
        for (name, f) in [
            ("decrease_factor", self.decrease_factor),
            ("increase_factor", self.increase_factor),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchState {
    scale: f64,
    previous_loss: Option<f64>,
}

impl Default for LineSearchState {
    fn default() -> Self {
        Self::new()
    }
}

impl LineSearchState {
    pub fn new() -> Self {
        Self {
            scale: 1.0,
            previous_loss: None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn previous_loss(&self) -> Option<f64> {
        self.previous_loss
    }

    /// Feed the latest mini-batch loss.
    ///
    /// The rise is measured relative to `|previous|`, which equals the plain
    /// ratio test `loss / previous` for positive losses and stays meaningful
    /// for objectives that go negative.
    pub fn observe(&mut self, config: &LineSearchConfig, loss: f64) -> Result<()> {
        if !config.enabled {
            return Ok(());
        }
        if !loss.is_finite() {
            return Err(Error::non_finite("line search loss"));
        }
        if let Some(prev) = self.previous_loss {
            let rise = loss - prev;
            if rise > config.increase_threshold * prev.abs() {
                self.scale *= 1.0 - config.decrease_factor;
            } else if rise < config.flat_threshold * prev.abs() {
                self.scale = (self.scale * (1.0 + config.increase_factor)).min(1.0);
            }
        }
        self.previous_loss = Some(loss);
        Ok(())
    }
}

/// `global_lr · scale`.
pub fn effective_lr(state: &LineSearchState, global_lr: f64) -> f64 {
    global_lr * state.scale
}
