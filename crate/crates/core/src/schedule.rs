//! Global learning-rate schedule: linear warmup to a batch-scaled peak, then
//! stepwise exponential decay that lands exactly on `final_lr` at the last
//! training step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub reference_batch: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub decay_interval_epochs: f64,
    pub steps_per_epoch: usize,
}

impl ScheduleConfig {
    /// `base_lr · batch_size / reference_batch`.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / self.reference_batch as f64
    }

    pub fn total_steps(&self) -> usize {
        (self.total_epochs * self.steps_per_epoch as f64).floor() as usize
    }

    fn warmup_steps(&self) -> usize {
        (self.warmup_epochs * self.steps_per_epoch as f64).round() as usize
    }

    fn decay_interval_steps(&self) -> usize {
        ((self.decay_interval_epochs * self.steps_per_epoch as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 || self.reference_batch == 0 || self.steps_per_epoch == 0 {
            return bad("batch_size, reference_batch and steps_per_epoch must be >= 1".into());
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("initial_lr", self.initial_lr),
            ("final_lr", self.final_lr),
            ("total_epochs", self.total_epochs),
            ("decay_interval_epochs", self.decay_interval_epochs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.warmup_epochs.is_finite() && self.warmup_epochs >= 0.0) {
            return bad(format!("warmup_epochs must be >= 0, got {}", self.warmup_epochs));
        }
        let peak = self.peak_lr();
        if self.initial_lr > peak {
            return bad(format!("initial_lr {} exceeds peak_lr {peak}", self.initial_lr));
        }
        if self.final_lr > peak {
            return bad(format!("final_lr {} exceeds peak_lr {peak}", self.final_lr));
        }
        if self.warmup_epochs >= self.total_epochs {
            return bad(format!(
                "warmup_epochs {} must be below total_epochs {}",
                self.warmup_epochs, self.total_epochs
            ));
        }
        if self.total_steps() == 0 {
            return bad("schedule has no steps".into());
        }
        Ok(())
    }

    /// Learning rate for the update with 0-based index `step`.
    ///
    /// Warmup interpolates linearly from `initial_lr` (at step 0) toward
    /// `peak_lr`. Afterwards the rate is `peak · r^k` with `k` the number of
    /// completed decay intervals and `r` chosen so that the interval holding
    /// the last step gives exactly `final_lr`. Steps past the end hold
    /// `final_lr`.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        self.validate()?;
        Ok(self.lr_at_unchecked(step))
    }

    pub(crate) fn lr_at_unchecked(&self, step: usize) -> f64 {
        let peak = self.peak_lr();
        let warmup = self.warmup_steps();
        if step < warmup {
            let frac = step as f64 / warmup as f64;
            return self.initial_lr + (peak - self.initial_lr) * frac;
        }
        let interval = self.decay_interval_steps();
        let last = self.total_steps().saturating_sub(1).max(warmup);
        let final_interval = (last - warmup) / interval;
        if final_interval == 0 {
            return self.final_lr;
        }
        let k = ((step - warmup) / interval).min(final_interval);
        if k == final_interval {
            return self.final_lr;
        }
        let ratio = self.final_lr / peak;
        peak * ratio.powf(k as f64 / final_interval as f64)
    }
}

/// Thresholds that pick warmup length, final rate and line-search use from
/// the batch size. `scale` multiplies every threshold so that desk-sized
/// datasets can reuse the large-dataset regime boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRegime {
    pub scale: f64,
}

impl Default for BatchRegime {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl BatchRegime {
    const MEDIUM: f64 = 8192.0;
    const LARGE: f64 = 32768.0;
    const LINE_SEARCH_MIN: f64 = 2048.0;

    /// Regime whose 8192 boundary lands at `dataset_size · fraction`.
    pub fn relative_to(dataset_size: usize, fraction: f64) -> Self {
        Self {
            scale: dataset_size as f64 * fraction / Self::MEDIUM,
        }
    }

    pub fn warmup_epochs(&self, batch: usize) -> f64 {
        let b = batch as f64;
        if b > Self::LARGE * self.scale {
            30.0
        } else if b > Self::MEDIUM * self.scale {
            15.0
        } else {
            5.0
        }
    }

    pub fn final_lr(&self, batch: usize) -> f64 {
        if (batch as f64) < Self::MEDIUM * self.scale {
            0.001
        } else {
            0.01
        }
    }

    /// Line search is switched off below this batch size, where mini-batch
    /// losses are too noisy to steer the step scale.
    pub fn line_search_enabled(&self, batch: usize) -> bool {
        batch as f64 >= Self::LINE_SEARCH_MIN * self.scale
    }
}

/// Schedule with the stock constants (`base_lr` 0.1 per 256 samples,
/// `initial_lr` 0.001, decay every 2 epochs) and regime-dependent warmup and
/// final rate.
pub fn default_schedule_for(batch_size: usize, total_epochs: f64, steps_per_epoch: usize) -> Result<ScheduleConfig> {
    default_schedule_in(BatchRegime::default(), batch_size, total_epochs, steps_per_epoch)
}

pub fn default_schedule_in(
    regime: BatchRegime,
    batch_size: usize,
    total_epochs: f64,
    steps_per_epoch: usize,
) -> Result<ScheduleConfig> {
    if batch_size == 0 || steps_per_epoch == 0 || !(total_epochs.is_finite() && total_epochs > 0.0) {
        return Err(Error::InvalidArgument(
            "batch_size, total_epochs and steps_per_epoch must be positive".into(),
        ));
    }
    if !(regime.scale.is_finite() && regime.scale > 0.0) {
        return Err(Error::InvalidArgument(format!("regime scale must be > 0, got {}", regime.scale)));
    }
    Ok(ScheduleConfig {
        base_lr: 0.1,
        reference_batch: 256,
        batch_size,
        initial_lr: 0.001,
        final_lr: regime.final_lr(batch_size),
        warmup_epochs: regime.warmup_epochs(batch_size),
        total_epochs,
        decay_interval_epochs: 2.0,
        steps_per_epoch,
    })
}
