//! Experiment driver: config parsing, the training loop with per-step CSV
//! logging, and batch-size or epoch sweeps.

mod config;
mod record;
mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{DataSource, Experiment, LrPolicy, Precision, ProblemSpec, RunConfig};
pub use record::{format_float, read_run_csv, RunRow, RunWriter, RUN_COLUMNS};
pub use sweep::{
    point_dir, read_summary_csv, summarize, sweep, SweepAxis, SweepOutcome, SweepPoint, SweepRun, SUMMARY_COLUMNS,
};

use crate::batching::{averaged_gradient, drop_micro_batches};
use crate::error::Result;
use crate::numerics::ParamVector;
use crate::optimizers::OptimizerKind;
use crate::problems::{Dataset, Problem};

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub csv_path: PathBuf,
    pub total_steps: usize,
    pub steps_completed: usize,
    /// A non-finite loss, gradient or weight stopped the run early.
    pub diverged: bool,
    /// Loss over the whole training set at the final weights.
    pub final_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub best_train_accuracy: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    /// Why the run diverged, when it did.
    pub divergence: Option<String>,
}

/// Logged rows plus the summary; the same rows are on disk at
/// `summary.csv_path`.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub summary: RunSummary,
    pub final_weights: ParamVector,
}

/// `<dir>/<optimizer>_seed<seed>.csv`
pub fn run_csv_path(dir: &Path, optimizer: OptimizerKind, seed: u64) -> PathBuf {
    dir.join(format!("{optimizer}_seed{seed}.csv"))
}

fn accuracies(problem: &Problem, test: Option<&Dataset>, w: &ParamVector) -> Result<(Option<f64>, Option<f64>)> {
    let Some(train) = problem.dataset() else {
        return Ok((None, None));
    };
    let train_acc = problem.accuracy(w, train)?;
    let test_acc = match test {
        Some(t) => Some(problem.accuracy(w, t)?),
        None => None,
    };
    Ok((Some(train_acc), test_acc))
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Train for `floor(epochs · steps_per_epoch)` steps, writing the run CSV
/// to `<output_dir>/<optimizer>_seed<seed>.csv`.
///
/// Divergence ends the run with `diverged = true` and keeps the log; it is
/// not an error. Errors are reserved for bad configs and I/O.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    let path = run_csv_path(&config.output_dir, config.optimizer, config.seed);
    run_to(config, &path)
}

pub fn run_to(config: &RunConfig, csv_path: &Path) -> Result<RunRecord> {
    let Experiment {
        problem,
        test_data,
        mut plan,
        lr,
        mut optimizer,
        total_steps,
        eval_every,
    } = config.build()?;
    let mut writer = RunWriter::create(csv_path)?;

    let f32_weights = config.precision == Precision::F32;
    let round = |w: ParamVector| if f32_weights { w.round_to_f32() } else { Ok(w) };
    let spe = plan.steps_per_epoch() as f64;
    let drop_fraction = config.drop_fraction;
    let shuffle_seed = config.shuffle_seed();

    let start = Instant::now();
    let mut weights = round(problem.init_weights(config.seed))?;
    let mut rows = Vec::with_capacity(total_steps);
    let mut divergence = None;
    let mut best = (None, None);

    for step in 0..total_steps {
        let global_lr = lr.lr_at(step);
        let eval = |w: &ParamVector| {
            let w = round(w.clone())?;
            let micro = plan.next_batch();
            let micro = drop_micro_batches(micro, drop_fraction, shuffle_seed, plan.steps_drawn());
            averaged_gradient(&problem, &w, &micro)
        };
        let outcome = optimizer
            .step(&weights, global_lr, eval)
            .and_then(|(w, m)| Ok((round(w)?, m)));
        let (next, metrics) = match outcome {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                divergence = Some(e.at_step(step).to_string());
                break;
            }
            Err(e) => return Err(e.at_step(step)),
        };
        weights = next;

        let evaluate_now = (step + 1) % eval_every == 0 || step + 1 == total_steps;
        let (train_accuracy, test_accuracy) = if evaluate_now {
            accuracies(&problem, test_data.as_deref(), &weights)?
        } else {
            (None, None)
        };
        best = (max_opt(best.0, train_accuracy), max_opt(best.1, test_accuracy));

        let row = RunRow {
            step,
            epoch: (step + 1) as f64 / spe,
            train_loss: metrics.loss,
            lr_global: metrics.lr_global,
            lr_scale: metrics.lr_scale,
            lr_effective: metrics.lr_effective,
            beta_raw: metrics.beta_raw,
            beta_clamped: metrics.beta_clamped,
            grad_norm: metrics.grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            train_accuracy,
            test_accuracy,
        };
        writer.append(&row)?;
        rows.push(row);
    }
    writer.finish()?;

    let diverged = divergence.is_some();
    let (final_loss, final_train_accuracy, final_test_accuracy) = if diverged {
        (None, None, None)
    } else {
        let loss = match problem.full_loss(&weights) {
            Ok(l) => Some(l),
            Err(e) if e.is_numeric() => None,
            Err(e) => return Err(e),
        };
        let (tr, te) = rows.last().map_or((None, None), |r| (r.train_accuracy, r.test_accuracy));
        (loss, tr, te)
    };

    Ok(RunRecord {
        summary: RunSummary {
            optimizer: config.optimizer,
            seed: config.seed,
            csv_path: csv_path.to_path_buf(),
            total_steps,
            steps_completed: rows.len(),
            diverged,
            final_loss,
            final_train_accuracy,
            final_test_accuracy,
            best_train_accuracy: best.0,
            best_test_accuracy: best.1,
            divergence,
        },
        rows,
        final_weights: weights,
    })
}

impl RunSummary {
    /// Run finished all steps with a finite final loss.
    pub fn completed(&self) -> bool {
        !self.diverged && self.steps_completed == self.total_steps && self.final_loss.is_some()
    }
}
