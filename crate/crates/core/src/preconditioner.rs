//! Diagonal quasi-Newton preconditioner.
//!
//! Keeps only the diagonal of a BFGS Hessian approximation, updated from the
//! change in weights `s` and gradients `y` between consecutive calls:
//!
//! ```text
//! hᵢ ← hᵢ + yᵢ² / (yᵀs) − hᵢ² sᵢ² / (Σⱼ hⱼ sⱼ²)
//! ```
//!
//! and hands back `1 / max(hᵢ, floor)` as the diagonal of `M⁻¹`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, reciprocal_clamped, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerConfig {
    pub curvature_floor: f64,
    pub skip_tolerance: f64,
    /// Also skip when `yᵀs < min_cosine · ‖y‖‖s‖`.
    pub min_cosine: f64,
    /// Skip curvature estimation and always return the identity.
    pub identity_mode: bool,
}

impl Default for PreconditionerConfig {
    fn default() -> Self {
        Self {
            curvature_floor: 1e-8,
            skip_tolerance: 1e-12,
            min_cosine: 0.0,
            identity_mode: false,
        }
    }
}

impl PreconditionerConfig {
    pub fn identity() -> Self {
        Self {
            identity_mode: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.curvature_floor.is_finite() && self.curvature_floor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "curvature_floor must be > 0, got {}",
                self.curvature_floor
            )));
        }
        if !(0.0..=1.0).contains(&self.min_cosine) {
            return Err(Error::InvalidConfig(format!("min_cosine must be in [0, 1], got {}", self.min_cosine)));
        }
        if !(self.skip_tolerance.is_finite() && self.skip_tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "skip_tolerance must be >= 0, got {}",
                self.skip_tolerance
            )));
        }
        Ok(())
    }
}

/// Outcome of one preconditioner call, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// First call: identity diagonal, nothing to update from.
    Initialized,
    Updated,
    /// Curvature pair unusable (`yᵀs` not safely positive or `sᵀHs ≈ 0`).
    Skipped,
    Identity,
}

#[derive(Debug, Clone)]
pub struct PreconditionerState {
    config: PreconditionerConfig,
    h_diag: ParamVector,
    previous: Option<(ParamVector, ParamVector)>,
    step: usize,
    last_outcome: Option<UpdateOutcome>,
}

impl PreconditionerState {
    pub fn new(n: usize, config: PreconditionerConfig) -> Self {
        Self {
            config,
            h_diag: ParamVector::ones(n),
            previous: None,
            step: 0,
            last_outcome: None,
        }
    }

    pub fn config(&self) -> &PreconditionerConfig {
        &self.config
    }

    /// Current diagonal Hessian estimate (not floored).
    pub fn h_diag(&self) -> &ParamVector {
        &self.h_diag
    }

    /// Number of calls made so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn last_outcome(&self) -> Option<UpdateOutcome> {
        self.last_outcome
    }

    /// Fold in the newest `(weights, gradient)` pair and return the diagonal
    /// of `M⁻¹`. In identity mode this is always all ones.
    pub fn update_and_invert(&mut self, weights: &ParamVector, gradient: &ParamVector) -> Result<ParamVector> {
        let n = self.h_diag.len();
        for v in [weights, gradient] {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        if self.config.identity_mode {
            self.step += 1;
            self.last_outcome = Some(UpdateOutcome::Identity);
            return Ok(identity_inverse(n));
        }

        let outcome = match self.previous.take() {
            None => UpdateOutcome::Initialized,
            Some((w_old, g_old)) => self
                .bfgs_update(weights, gradient, &w_old, &g_old)
                .map_err(|e| e.at_step(self.step))?,
        };
        self.previous = Some((weights.clone(), gradient.clone()));
        self.step += 1;
        self.last_outcome = Some(outcome);
        Ok(reciprocal_clamped(&self.h_diag, self.config.curvature_floor))
    }

    fn bfgs_update(
        &mut self,
        weights: &ParamVector,
        gradient: &ParamVector,
        w_old: &ParamVector,
        g_old: &ParamVector,
    ) -> Result<UpdateOutcome> {
        let s = weights.sub(w_old)?;
        let y = gradient.sub(g_old)?;
        let ys = dot(&y, &s)?;
        let shs: f64 = self
            .h_diag
            .iter()
            .zip(s.iter())
            .map(|(h, si)| h * si * si)
            .sum();
        if !shs.is_finite() {
            return Err(Error::non_finite("preconditioner sᵀHs"));
        }
        let tol = self.config.skip_tolerance;
        let aligned = ys >= self.config.min_cosine * y.norm() * s.norm();
        if ys < tol || shs.abs() < tol || !aligned {
            return Ok(UpdateOutcome::Skipped);
        }
        let updated: Vec<f64> = self
            .h_diag
            .iter()
            .zip(s.iter().zip(y.iter()))
            .map(|(&h, (&si, &yi))| h + yi * yi / ys - (h * h * si * si) / shs)
            .collect();
        self.h_diag = ParamVector::new(updated).map_err(|_| Error::non_finite("preconditioner diagonal"))?;
        Ok(UpdateOutcome::Updated)
    }
}

/// All-ones `M⁻¹` of length `n`.
pub fn identity_inverse(n: usize) -> ParamVector {
    ParamVector::ones(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn first_call_returns_identity() {
        let mut p = PreconditionerState::new(3, PreconditionerConfig::default());
        let m = p.update_and_invert(&pv(&[1.0, 2.0, 3.0]), &pv(&[-4.0, 0.5, 9.0])).unwrap();
        assert_eq!(m, ParamVector::ones(3));
        assert_eq!(p.last_outcome(), Some(UpdateOutcome::Initialized));
        assert_eq!(p.step(), 1);
    }

    #[test]
    fn scalar_quadratic_recovers_curvature() {
        // f = ½·4·w², w: 1 → 0.5, gradient 4 → 2
        let mut p = PreconditionerState::new(1, PreconditionerConfig::default());
        p.update_and_invert(&pv(&[1.0]), &pv(&[4.0])).unwrap();
        let m = p.update_and_invert(&pv(&[0.5]), &pv(&[2.0])).unwrap();
        assert_eq!(p.h_diag()[0], 4.0);
        assert_eq!(m[0], 0.25);
    }

    #[test]
    fn identical_gradients_skip() {
        let mut p = PreconditionerState::new(2, PreconditionerConfig::default());
        p.update_and_invert(&pv(&[0.0, 0.0]), &pv(&[1.0, 1.0])).unwrap();
        let m = p.update_and_invert(&pv(&[0.3, -0.2]), &pv(&[1.0, 1.0])).unwrap();
        assert_eq!(p.last_outcome(), Some(UpdateOutcome::Skipped));
        assert_eq!(m, ParamVector::ones(2));
        assert_eq!(p.step(), 2);
    }

    #[test]
    fn negative_curvature_skips() {
        let mut p = PreconditionerState::new(1, PreconditionerConfig::default());
        p.update_and_invert(&pv(&[0.0]), &pv(&[1.0])).unwrap();
        p.update_and_invert(&pv(&[1.0]), &pv(&[0.0])).unwrap();
        assert_eq!(p.last_outcome(), Some(UpdateOutcome::Skipped));
        assert_eq!(p.h_diag()[0], 1.0);
    }

    #[test]
    fn cosine_guard_skips_misaligned_pairs() {
        let cfg = PreconditionerConfig {
            min_cosine: 0.5,
            ..PreconditionerConfig::default()
        };
        // s = [1, 0], y = [1, 3]: cos = 1/√10 ≈ 0.32
        let mut p = PreconditionerState::new(2, cfg);
        p.update_and_invert(&pv(&[0.0, 0.0]), &pv(&[0.0, 0.0])).unwrap();
        p.update_and_invert(&pv(&[1.0, 0.0]), &pv(&[1.0, 3.0])).unwrap();
        assert_eq!(p.last_outcome(), Some(UpdateOutcome::Skipped));
        // s = [1, 0], y = [2, 1]: cos ≈ 0.89
        let mut p = PreconditionerState::new(2, cfg);
        p.update_and_invert(&pv(&[0.0, 0.0]), &pv(&[0.0, 0.0])).unwrap();
        p.update_and_invert(&pv(&[1.0, 0.0]), &pv(&[2.0, 1.0])).unwrap();
        assert_eq!(p.last_outcome(), Some(UpdateOutcome::Updated));
    }

    #[test]
    fn identity_mode_ignores_curvature() {
        let mut p = PreconditionerState::new(2, PreconditionerConfig::identity());
        p.update_and_invert(&pv(&[0.0, 0.0]), &pv(&[1.0, 1.0])).unwrap();
        let m = p.update_and_invert(&pv(&[1.0, 1.0]), &pv(&[9.0, 3.0])).unwrap();
        assert_eq!(m, identity_inverse(2));
        assert_eq!(identity_inverse(3), pv(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn axis_steps_recover_diagonal_curvature() {
        let a = [3.0, 0.2, 50.0];
        let grad = |w: &[f64]| pv(&[a[0] * w[0], a[1] * w[1], a[2] * w[2]]);
        let mut p = PreconditionerState::new(3, PreconditionerConfig::default());
        let mut w = vec![1.0, 1.0, 1.0];
        p.update_and_invert(&pv(&w), &grad(&w)).unwrap();
        for i in 0..3 {
            w[i] -= 0.7;
            p.update_and_invert(&pv(&w), &grad(&w)).unwrap();
            assert!((p.h_diag()[i] - a[i]).abs() <= 1e-12 * a[i]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut p = PreconditionerState::new(2, PreconditionerConfig::default());
        assert!(matches!(
            p.update_and_invert(&pv(&[1.0]), &pv(&[1.0, 2.0])),
            Err(Error::Dimension { .. })
        ));
    }

    proptest! {
        #[test]
        fn scalar_identity_any_start(a in 0.01f64..1e3, h0 in 0.01f64..1e3, w0 in -10.0f64..10.0, step in 0.01f64..5.0) {
            // seed h_diag with h0 by one axis step on a quadratic of curvature h0
            let mut p = PreconditionerState::new(1, PreconditionerConfig::default());
            p.update_and_invert(&pv(&[0.0]), &pv(&[0.0])).unwrap();
            p.update_and_invert(&pv(&[1.0]), &pv(&[h0])).unwrap();
            prop_assert!((p.h_diag()[0] - h0).abs() <= 1e-12 * h0.max(1.0));
            p.update_and_invert(&pv(&[w0]), &pv(&[a * w0])).unwrap();
            let w1 = w0 - step;
            p.update_and_invert(&pv(&[w1]), &pv(&[a * w1])).unwrap();
            prop_assert!((p.h_diag()[0] - a).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn inverse_positive_and_bounded(
            steps in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 8), 2..20),
            floor in 1e-10f64..1e-2,
        ) {
            let cfg = PreconditionerConfig { curvature_floor: floor, ..PreconditionerConfig::default() };
            let mut p = PreconditionerState::new(4, cfg);
            for s in &steps {
                let m = p.update_and_invert(&pv(&s[..4]), &pv(&s[4..])).unwrap();
                for &v in m.iter() {
                    prop_assert!(v > 0.0 && v <= 1.0 / floor && v.is_finite());
                }
            }
        }

        #[test]
        fn permutation_equivariant(steps in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..8)) {
            let perm = [2usize, 0, 1];
            let mut a = PreconditionerState::new(3, PreconditionerConfig::default());
            let mut b = PreconditionerState::new(3, PreconditionerConfig::default());
            for s in &steps {
                let ma = a.update_and_invert(&pv(&s[..3]), &pv(&s[3..])).unwrap();
                let pw: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
                let pg: Vec<f64> = perm.iter().map(|&i| s[3 + i]).collect();
                let mb = b.update_and_invert(&pv(&pw), &pv(&pg)).unwrap();
                for (k, &i) in perm.iter().enumerate() {
                    prop_assert!((mb[k] - ma[i]).abs() <= 1e-9 * ma[i].abs().max(1.0));
                }
            }
        }
    }
}
