//! Step-update engines behind one interface: NLCG (Polak-Ribière and
//! Fletcher-Reeves) and the SGD, Momentum and RMSProp baselines.

mod first_order;
mod nlcg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use first_order::{momentum_step, rmsprop_step, sgd_step, FirstOrderConfig, FirstOrderState};
pub use nlcg::{nlcg_exact_quadratic_step_length, BetaRule, NlcgConfig, NlcgState};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::problems::BatchEval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Rmsprop,
    NlcgPr,
    NlcgFr,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Rmsprop,
        OptimizerKind::NlcgPr,
        OptimizerKind::NlcgFr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::NlcgPr => "nlcg_pr",
            OptimizerKind::NlcgFr => "nlcg_fr",
        }
    }

    pub fn beta_rule(self) -> Option<BetaRule> {
        match self {
            OptimizerKind::NlcgPr => Some(BetaRule::PolakRibiere),
            OptimizerKind::NlcgFr => Some(BetaRule::FletcherReeves),
            _ => None,
        }
    }

    pub fn is_nlcg(self) -> bool {
        self.beta_rule().is_some()
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown optimizer {s:?}")))
    }
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Mini-batch loss from this step's gradient evaluation.
    pub loss: f64,
    pub lr_global: f64,
    pub lr_scale: f64,
    pub lr_effective: f64,
    /// β before clamping; `None` for first-order optimizers.
    pub beta_raw: Option<f64>,
    pub beta_clamped: Option<f64>,
    /// β was reset because `δ_old` vanished.
    pub restarted: bool,
    pub grad_norm: f64,
}

type FirstOrderUpdate = fn(&mut FirstOrderState, &ParamVector, &ParamVector, f64) -> Result<ParamVector>;

/// A configured optimizer with its running state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(FirstOrderState),
    Momentum(FirstOrderState),
    Rmsprop(FirstOrderState),
    Nlcg {
        config: NlcgConfig,
        state: Option<Box<NlcgState>>,
    },
}

impl Optimizer {
    pub fn first_order(kind: OptimizerKind, n: usize, config: FirstOrderConfig) -> Result<Self> {
        config.validate()?;
        let state = FirstOrderState::new(n, config);
        match kind {
            OptimizerKind::Sgd => Ok(Optimizer::Sgd(state)),
            OptimizerKind::Momentum => Ok(Optimizer::Momentum(state)),
            OptimizerKind::Rmsprop => Ok(Optimizer::Rmsprop(state)),
            other => Err(Error::InvalidConfig(format!("{other} is not a first-order optimizer"))),
        }
    }

    pub fn nlcg(config: NlcgConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer::Nlcg { config, state: None })
    }

    pub fn nlcg_state(&self) -> Option<&NlcgState> {
        match self {
            Optimizer::Nlcg { state, .. } => state.as_deref(),
            _ => None,
        }
    }

    /// Apply one update.
    ///
    /// `eval` evaluates the next mini-batch at the weights it is given; each
    /// call should draw a fresh batch. First-order optimizers call it once at
    /// `weights`. NLCG calls it once at the updated weights, plus once more
    /// at `weights` on its very first step to seed its state.
    pub fn step<F>(&mut self, weights: &ParamVector, global_lr: f64, mut eval: F) -> Result<(ParamVector, StepMetrics)>
    where
        F: FnMut(&ParamVector) -> Result<BatchEval>,
    {
        let (state, update): (&mut FirstOrderState, FirstOrderUpdate) = match self {
            Optimizer::Nlcg { config, state } => {
                if state.is_none() {
                    let first = eval(weights)?;
                    *state = Some(Box::new(NlcgState::init(*config, weights, &first)?));
                }
                return state.as_mut().unwrap().step(weights, global_lr, eval);
            }
            Optimizer::Sgd(s) => (s, sgd_step),
            Optimizer::Momentum(s) => (s, momentum_step),
            Optimizer::Rmsprop(s) => (s, rmsprop_step),
        };
        let e = eval(weights)?;
        let w = update(state, weights, &e.gradient, global_lr)?;
        Ok((
            w,
            StepMetrics {
                loss: e.loss,
                lr_global: global_lr,
                lr_scale: 1.0,
                lr_effective: global_lr,
                beta_raw: None,
                beta_clamped: None,
                restarted: false,
                grad_norm: e.gradient.norm(),
            },
        ))
    }
}
