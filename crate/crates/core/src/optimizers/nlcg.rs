//! Stochastic preconditioned nonlinear conjugate gradient.
//!
//! Each step moves along the current direction `d` with the scheduled step
//! length, evaluates a fresh mini-batch gradient, preconditions the new
//! residual `r = −∇L` with the diagonal BFGS estimate, and mixes the old
//! direction back in with a Polak-Ribière or Fletcher-Reeves coefficient:
//!
//! ```text
//! w ← w + α d
//! r ← −∇L(w);  δ_old ← δ_new;  δ_mid ← rᵀs_prev
//! s ← M⁻¹ r;   δ_new ← rᵀs
//! β ← (δ_new − δ_mid)/δ_old  (PR)   or   δ_new/δ_old  (FR),  clamped
//! d ← s + β d
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linesearch::{effective_lr, LineSearchConfig, LineSearchState};
use crate::numerics::{axpy, dot, hadamard, ParamVector};
use crate::preconditioner::{PreconditionerConfig, PreconditionerState};
use crate::problems::{BatchEval, Quadratic};

use super::StepMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    PolakRibiere,
    FletcherReeves,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlcgConfig {
    pub rule: BetaRule,
    /// Upper clamp on β; `None` keeps only the `β ≥ 0` restart clamp.
    pub beta_upper: Option<f64>,
    /// `|δ_old|` below this restarts with β = 0.
    pub restart_tolerance: f64,
    /// Discard conjugacy entirely (β = 0 every step).
    pub force_beta_zero: bool,
    pub line_search: LineSearchConfig,
    pub preconditioner: PreconditionerConfig,
}

impl NlcgConfig {
    pub fn new(rule: BetaRule) -> Self {
        Self {
            rule,
            beta_upper: Some(1.0),
            restart_tolerance: 1e-12,
            force_beta_zero: false,
            line_search: LineSearchConfig::default(),
            preconditioner: PreconditionerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(upper) = self.beta_upper {
            if !(upper.is_finite() && upper >= 0.0) {
                return Err(Error::InvalidConfig(format!("beta upper clamp must be >= 0, got {upper}")));
            }
        }
        if !(self.restart_tolerance.is_finite() && self.restart_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("restart tolerance must be >= 0".into()));
        }
        self.line_search.validate()?;
        self.preconditioner.validate()
    }
}

/// Persistent optimizer state between steps.
#[derive(Debug, Clone)]
pub struct NlcgState {
    config: NlcgConfig,
    residual: ParamVector,
    preconditioned: ParamVector,
    direction: ParamVector,
    delta_new: f64,
    delta_old: f64,
    delta_mid: f64,
    beta: f64,
    t: usize,
    precond: PreconditionerState,
    linesearch: LineSearchState,
}

impl NlcgState {
    /// Set up from the gradient at the starting weights: `r = −g`,
    /// `s = M⁻¹r` (identity on the first call), `d = s`, `δ_new = rᵀd`.
    pub fn init(config: NlcgConfig, weights: &ParamVector, eval: &BatchEval) -> Result<Self> {
        config.validate()?;
        let n = weights.len();
        if eval.gradient.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: eval.gradient.len(),
            });
        }
        let mut precond = PreconditionerState::new(n, config.preconditioner);
        let mut linesearch = LineSearchState::new();
        linesearch.observe(&config.line_search, eval.loss)?;

        let residual = eval.gradient.neg();
        let m_inv = precond.update_and_invert(weights, &eval.gradient)?;
        let preconditioned = hadamard(&m_inv, &residual)?;
        let direction = preconditioned.clone();
        let delta_new = dot(&residual, &direction)?;
        Ok(Self {
            config,
            residual,
            preconditioned,
            direction,
            delta_new,
            delta_old: 0.0,
            delta_mid: 0.0,
            beta: 0.0,
            t: 0,
            precond,
            linesearch,
        })
    }

    pub fn config(&self) -> &NlcgConfig {
        &self.config
    }

    pub fn direction(&self) -> &ParamVector {
        &self.direction
    }

    /// Current residual `r = −∇L(w)`.
    pub fn residual(&self) -> &ParamVector {
        &self.residual
    }

    pub fn preconditioned_residual(&self) -> &ParamVector {
        &self.preconditioned
    }

    pub fn delta_new(&self) -> f64 {
        self.delta_new
    }

    pub fn delta_old(&self) -> f64 {
        self.delta_old
    }

    pub fn delta_mid(&self) -> f64 {
        self.delta_mid
    }

    /// β applied at the most recent step.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn preconditioner(&self) -> &PreconditionerState {
        &self.precond
    }

    pub fn line_search(&self) -> &LineSearchState {
        &self.linesearch
    }

    /// One training step with step length `global_lr · α^s`.
    ///
    /// `eval_fn` is called exactly once, at the updated weights, and should
    /// evaluate this step's mini-batch.
    pub fn step<F>(&mut self, weights: &ParamVector, global_lr: f64, eval_fn: F) -> Result<(ParamVector, StepMetrics)>
    where
        F: FnOnce(&ParamVector) -> Result<BatchEval>,
    {
        if !(global_lr.is_finite() && global_lr > 0.0) {
            return Err(Error::InvalidArgument(format!("global learning rate must be > 0, got {global_lr}")));
        }
        let scale = self.linesearch.scale();
        let alpha = effective_lr(&self.linesearch, global_lr);
        self.advance(weights, alpha, global_lr, scale, eval_fn)
    }

    /// One step with the exact minimising step length along `d` for a
    /// quadratic objective, in place of the scheduled rate. Used to check
    /// the conjugacy machinery against linear CG.
    pub fn step_exact_quadratic<F>(
        &mut self,
        problem: &Quadratic,
        weights: &ParamVector,
        eval_fn: F,
    ) -> Result<(ParamVector, StepMetrics)>
    where
        F: FnOnce(&ParamVector) -> Result<BatchEval>,
    {
        let alpha = nlcg_exact_quadratic_step_length(problem, &self.residual, &self.direction)?;
        self.advance(weights, alpha, alpha, 1.0, eval_fn)
    }

    fn advance<F>(
        &mut self,
        weights: &ParamVector,
        alpha: f64,
        lr_global: f64,
        lr_scale: f64,
        eval_fn: F,
    ) -> Result<(ParamVector, StepMetrics)>
    where
        F: FnOnce(&ParamVector) -> Result<BatchEval>,
    {
        if weights.len() != self.direction.len() {
            return Err(Error::Dimension {
                expected: self.direction.len(),
                actual: weights.len(),
            });
        }
        let new_weights = axpy(alpha, &self.direction, weights)?;
        let eval = eval_fn(&new_weights)?;
        if eval.gradient.len() != weights.len() {
            return Err(Error::Dimension {
                expected: weights.len(),
                actual: eval.gradient.len(),
            });
        }
        self.linesearch.observe(&self.config.line_search, eval.loss)?;

        let residual = eval.gradient.neg();
        let delta_old = self.delta_new;
        let delta_mid = dot(&residual, &self.preconditioned)?;
        let m_inv = self.precond.update_and_invert(&new_weights, &eval.gradient)?;
        let preconditioned = hadamard(&m_inv, &residual)?;
        let delta_new = dot(&residual, &preconditioned)?;

        let restarted = delta_old.abs() < self.config.restart_tolerance;
        let beta_raw = if restarted {
            0.0
        } else {
            match self.config.rule {
                BetaRule::PolakRibiere => (delta_new - delta_mid) / delta_old,
                BetaRule::FletcherReeves => delta_new / delta_old,
            }
        };
        if !beta_raw.is_finite() {
            return Err(Error::non_finite("conjugacy coefficient β"));
        }
        let beta = clamp_beta(beta_raw, &self.config);
        let direction = axpy(beta, &self.direction, &preconditioned)?;

        self.residual = residual;
        self.preconditioned = preconditioned;
        self.direction = direction;
        self.delta_old = delta_old;
        self.delta_mid = delta_mid;
        self.delta_new = delta_new;
        self.beta = beta;
        self.t += 1;

        let metrics = StepMetrics {
            loss: eval.loss,
            lr_global,
            lr_scale,
            lr_effective: alpha,
            beta_raw: Some(beta_raw),
            beta_clamped: Some(beta),
            restarted,
            grad_norm: eval.gradient.norm(),
        };
        Ok((new_weights, metrics))
    }
}

fn clamp_beta(raw: f64, config: &NlcgConfig) -> f64 {
    if config.force_beta_zero {
        return 0.0;
    }
    let beta = raw.max(0.0);
    match config.beta_upper {
        Some(upper) => beta.min(upper),
        None => beta,
    }
}

/// Exact line minimiser along `d` for a quadratic: `rᵀd / dᵀAd`.
pub fn nlcg_exact_quadratic_step_length(problem: &Quadratic, residual: &ParamVector, direction: &ParamVector) -> Result<f64> {
    let ad = problem.hessian_vector(direction)?;
    let curvature = dot(direction, &ad)?;
    if curvature <= 0.0 {
        return Err(Error::non_finite(format!(
            "exact step length: direction curvature dᵀAd = {curvature}"
        )));
    }
    Ok(dot(residual, direction)? / curvature)
}
