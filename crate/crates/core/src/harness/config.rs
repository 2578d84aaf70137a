use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::batching::BatchPlan;
use crate::error::{Error, Result};
use crate::linesearch::LineSearchConfig;
use crate::optimizers::{FirstOrderConfig, NlcgConfig, Optimizer, OptimizerKind};
use crate::preconditioner::PreconditionerConfig;
use crate::problems::{
    load_csv_dataset, make_diagonal_quadratic, make_quadratic, make_synthetic_split, Dataset, Problem,
};
use crate::schedule::{BatchRegime, ScheduleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSpec {
    Mlp,
    LogisticRegression,
    /// Dense SPD quadratic with linearly spaced spectrum.
    Quadratic,
    /// Diagonal SPD quadratic with log-spaced curvatures.
    DiagonalQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "f64")]
    F64,
    /// Weights are stored in single precision between steps.
    #[serde(rename = "f32")]
    F32,
}

/// One training run, as read from a flat TOML file.
///
/// Optional keys left unset take their value from the batch-size regime:
/// `final_lr`, `warmup_epochs` and `line_search` (NLCG only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub dataset: DataSource,
    pub num_samples: usize,
    pub test_samples: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub separation: f64,
    /// Dataset and quadratic seed; defaults to `seed`.
    pub data_seed: Option<u64>,
    pub csv_path: Option<PathBuf>,
    pub test_csv_path: Option<PathBuf>,
    pub label_column: String,
    pub hidden_layers: Vec<usize>,
    pub quadratic_dim: usize,
    pub condition_number: f64,
    /// Per-sample noise on the quadratic's linear term.
    pub quadratic_noise: f64,

    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    /// Upper clamp on β; `inf` keeps only the lower clamp.
    pub beta_upper: f64,
    pub restart_tolerance: f64,
    pub force_beta_zero: bool,

    pub preconditioner: bool,
    pub curvature_floor: f64,
    pub skip_tolerance: f64,
    pub min_curvature_cosine: f64,

    pub line_search: Option<bool>,
    pub ls_increase_threshold: f64,
    pub ls_flat_threshold: f64,
    pub ls_decrease_factor: f64,
    pub ls_increase_factor: f64,

    pub micro_batch_size: usize,
    pub virtual_factor: usize,
    pub drop_fraction: f64,
    /// Batch order seed; defaults to `seed`.
    pub shuffle_seed: Option<u64>,
    pub allow_wraparound: bool,

    pub base_lr: f64,
    pub reference_batch: usize,
    pub initial_lr: f64,
    pub final_lr: Option<f64>,
    pub warmup_epochs: Option<f64>,
    pub decay_interval_epochs: f64,
    /// Multiplier on the regime batch thresholds. Unset: the 8192 boundary
    /// sits at a quarter of the training set.
    pub regime_scale: Option<f64>,
    /// Replace the schedule with a fixed rate.
    pub constant_lr: Option<f64>,

    pub epochs: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Accuracy every this many steps and at the last step. Unset: once per epoch.
    pub eval_every: Option<usize>,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ls = LineSearchConfig::default();
        let pc = PreconditionerConfig::default();
        let fo = FirstOrderConfig::default();
        Self {
            problem: ProblemSpec::Mlp,
            dataset: DataSource::Synthetic,
            num_samples: 8192,
            test_samples: 0,
            feature_dim: 16,
            num_classes: 10,
            separation: 1.0,
            data_seed: None,
            csv_path: None,
            test_csv_path: None,
            label_column: "label".into(),
            hidden_layers: vec![32],
            quadratic_dim: 50,
            condition_number: 1e3,
            quadratic_noise: 0.0,
            optimizer: OptimizerKind::NlcgFr,
            momentum: fo.momentum,
            rms_decay: fo.rms_decay,
            rms_epsilon: fo.rms_epsilon,
            beta_upper: 1.0,
            restart_tolerance: 1e-12,
            force_beta_zero: false,
            preconditioner: !pc.identity_mode,
            curvature_floor: pc.curvature_floor,
            skip_tolerance: pc.skip_tolerance,
            min_curvature_cosine: pc.min_cosine,
            line_search: None,
            ls_increase_threshold: ls.increase_threshold,
            ls_flat_threshold: ls.flat_threshold,
            ls_decrease_factor: ls.decrease_factor,
            ls_increase_factor: ls.increase_factor,
            micro_batch_size: 64,
            virtual_factor: 1,
            drop_fraction: 0.0,
            shuffle_seed: None,
            allow_wraparound: false,
            base_lr: 0.1,
            reference_batch: 256,
            initial_lr: 0.001,
            final_lr: None,
            warmup_epochs: None,
            decay_interval_epochs: 2.0,
            regime_scale: None,
            constant_lr: None,
            epochs: 30.0,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            eval_every: None,
            precision: Precision::F64,
        }
    }
}

/// Global learning rate source for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum LrPolicy {
    Schedule(ScheduleConfig),
    Constant(f64),
}

impl LrPolicy {
    pub fn lr_at(&self, step: usize) -> f64 {
        match self {
            LrPolicy::Schedule(s) => s.lr_at_unchecked(step),
            LrPolicy::Constant(lr) => *lr,
        }
    }
}

/// Everything a run needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: Problem,
    pub test_data: Option<Arc<Dataset>>,
    pub plan: BatchPlan,
    pub lr: LrPolicy,
    pub optimizer: Optimizer,
    pub total_steps: usize,
    pub eval_every: usize,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.shuffle_seed.unwrap_or(self.seed)
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch_size * self.virtual_factor
    }

    /// Cheap checks that need no data. Dataset-dependent checks happen in
    /// [`RunConfig::build`].
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.epochs.is_finite() && self.epochs > 0.0) {
            return bad(format!("epochs must be > 0, got {}", self.epochs));
        }
        if self.micro_batch_size == 0 || self.virtual_factor == 0 {
            return bad("micro_batch_size and virtual_factor must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return bad(format!("drop_fraction must be in [0, 1), got {}", self.drop_fraction));
        }
        if let Some(lr) = self.constant_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("constant_lr must be > 0, got {lr}"));
            }
        }
        if let Some(s) = self.regime_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("regime_scale must be > 0, got {s}"));
            }
        }
        if self.beta_upper.is_nan() || self.beta_upper < 0.0 {
            return bad(format!("beta_upper must be >= 0, got {}", self.beta_upper));
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be >= 1".into());
        }
        if self.dataset == DataSource::Csv && self.csv_path.is_none() && self.is_classification() {
            return bad("dataset = \"csv\" needs csv_path".into());
        }
        self.first_order_config().validate()?;
        self.nlcg_config().validate()
    }

    fn is_classification(&self) -> bool {
        matches!(self.problem, ProblemSpec::Mlp | ProblemSpec::LogisticRegression)
    }

    pub fn first_order_config(&self) -> FirstOrderConfig {
        FirstOrderConfig {
            momentum: self.momentum,
            rms_decay: self.rms_decay,
            rms_epsilon: self.rms_epsilon,
        }
    }

    fn line_search_config(&self, enabled: bool) -> LineSearchConfig {
        LineSearchConfig {
            increase_threshold: self.ls_increase_threshold,
            flat_threshold: self.ls_flat_threshold,
            decrease_factor: self.ls_decrease_factor,
            increase_factor: self.ls_increase_factor,
            enabled,
        }
    }

    /// NLCG settings with line search as configured, or on when unset.
    pub fn nlcg_config(&self) -> NlcgConfig {
        self.nlcg_config_with(self.line_search.unwrap_or(true))
    }

    fn nlcg_config_with(&self, line_search: bool) -> NlcgConfig {
        let rule = self.optimizer.beta_rule().unwrap_or(crate::optimizers::BetaRule::FletcherReeves);
        NlcgConfig {
            rule,
            beta_upper: Some(self.beta_upper).filter(|u| u.is_finite()),
            restart_tolerance: self.restart_tolerance,
            force_beta_zero: self.force_beta_zero,
            line_search: self.line_search_config(line_search),
            preconditioner: PreconditionerConfig {
                curvature_floor: self.curvature_floor,
                skip_tolerance: self.skip_tolerance,
                min_cosine: self.min_curvature_cosine,
                identity_mode: !self.preconditioner,
            },
        }
    }

    pub fn regime(&self, dataset_size: usize) -> BatchRegime {
        match self.regime_scale {
            Some(scale) => BatchRegime { scale },
            None => BatchRegime::relative_to(dataset_size, 0.25),
        }
    }

    fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self.dataset {
            DataSource::Synthetic => make_synthetic_split(
                self.num_samples,
                self.test_samples,
                self.feature_dim,
                self.num_classes,
                self.separation,
                self.data_seed(),
            ),
            DataSource::Csv => {
                let path = self.csv_path.as_ref().expect("validated");
                let train = load_csv_dataset(path, &self.label_column)?;
                let test = match &self.test_csv_path {
                    Some(p) => Some(load_csv_dataset(p, &self.label_column)?),
                    None => None,
                };
                Ok((train, test))
            }
        }
    }

    pub fn build_problem(&self) -> Result<(Problem, Option<Arc<Dataset>>)> {
        let quadratic = |q: crate::problems::Quadratic| -> Result<Problem> {
            Ok(Problem::Quadratic(q.with_sample_noise(
                self.num_samples,
                self.quadratic_noise,
                self.data_seed(),
            )?))
        };
        match self.problem {
            ProblemSpec::Quadratic => Ok((
                quadratic(make_quadratic(self.quadratic_dim, self.condition_number, self.data_seed())?)?,
                None,
            )),
            ProblemSpec::DiagonalQuadratic => Ok((
                quadratic(make_diagonal_quadratic(
                    self.quadratic_dim,
                    self.condition_number,
                    self.data_seed(),
                )?)?,
                None,
            )),
            ProblemSpec::Mlp | ProblemSpec::LogisticRegression => {
                let (train, test) = self.load_data()?;
                if let Some(t) = &test {
                    if t.feature_dim() != train.feature_dim() {
                        return Err(Error::InvalidConfig(format!(
                            "test set has {} features, training set {}",
                            t.feature_dim(),
                            train.feature_dim()
                        )));
                    }
                }
                let train = Arc::new(train);
                let problem = if self.problem == ProblemSpec::Mlp {
                    Problem::mlp(train, &self.hidden_layers)?
                } else {
                    Problem::logistic(train)
                };
                Ok((problem, test.map(Arc::new)))
            }
        }
    }

    /// Schedule for this run, identical for every optimizer kind.
    pub fn lr_policy(&self, dataset_size: usize, steps_per_epoch: usize) -> Result<LrPolicy> {
        if let Some(lr) = self.constant_lr {
            return Ok(LrPolicy::Constant(lr));
        }
        let batch = self.effective_batch();
        let regime = self.regime(dataset_size);
        let schedule = ScheduleConfig {
            base_lr: self.base_lr,
            reference_batch: self.reference_batch,
            batch_size: batch,
            initial_lr: self.initial_lr,
            final_lr: self.final_lr.unwrap_or_else(|| regime.final_lr(batch)),
            warmup_epochs: self.warmup_epochs.unwrap_or_else(|| regime.warmup_epochs(batch)),
            total_epochs: self.epochs,
            decay_interval_epochs: self.decay_interval_epochs,
            steps_per_epoch,
        };
        schedule.validate()?;
        Ok(LrPolicy::Schedule(schedule))
    }

    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let (problem, test_data) = self.build_problem()?;
        let n = problem.num_samples();
        let plan = if self.allow_wraparound {
            BatchPlan::with_wraparound(n, self.micro_batch_size, self.virtual_factor, self.shuffle_seed())?
        } else {
            BatchPlan::new(n, self.micro_batch_size, self.virtual_factor, self.shuffle_seed())?
        };
        let spe = plan.steps_per_epoch();
        let total_steps = (self.epochs * spe as f64).floor() as usize;
        if total_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} epochs of {spe} steps is less than one step",
                self.epochs
            )));
        }
        let lr = self.lr_policy(n, spe)?;
        let optimizer = if self.optimizer.is_nlcg() {
            let ls = self
                .line_search
                .unwrap_or_else(|| self.regime(n).line_search_enabled(self.effective_batch()));
            Optimizer::nlcg(self.nlcg_config_with(ls))?
        } else {
            Optimizer::first_order(self.optimizer, problem.weight_count(), self.first_order_config())?
        };
        Ok(Experiment {
            problem,
            test_data,
            plan,
            lr,
            optimizer,
            total_steps,
            eval_every: self.eval_every.unwrap_or(spe),
        })
    }
}
