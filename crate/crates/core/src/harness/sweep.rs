use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::record::format_float;
use super::{run_csv_path, run_to, RunConfig, RunSummary};
use crate::error::{Error, Result};
use crate::optimizers::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Effective batch size; the micro-batch size is `value / virtual_factor`.
    BatchSize,
    Epochs,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::Epochs => "epochs",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = base.clone();
        match self {
            SweepAxis::BatchSize => {
                let k = base.virtual_factor;
                if !(value >= 1.0 && value.fract() == 0.0 && (value as usize).is_multiple_of(k)) {
                    return Err(Error::InvalidConfig(format!(
                        "batch size {value} is not a positive multiple of virtual_factor {k}"
                    )));
                }
                c.micro_batch_size = value as usize / k;
            }
            SweepAxis::Epochs => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::InvalidConfig(format!("epochs must be > 0, got {value}")));
                }
                c.epochs = value;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch_size" => Ok(SweepAxis::BatchSize),
            "epochs" => Ok(SweepAxis::Epochs),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {other:?}; expected batch_size or epochs"
            ))),
        }
    }
}

/// One cell of the sweep grid and how it went.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub optimizer: OptimizerKind,
    pub value: f64,
    pub seed: u64,
    /// `Err` holds the message of a run that failed outright.
    pub result: std::result::Result<RunSummary, String>,
}

/// Mean and sample standard deviation over the completed seeds of one
/// `(optimizer, value)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub optimizer: OptimizerKind,
    pub value: f64,
    pub runs: usize,
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
    pub final_loss: Option<(f64, f64)>,
    pub final_train_accuracy: Option<(f64, f64)>,
    pub final_test_accuracy: Option<(f64, f64)>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub points: Vec<SweepPoint>,
    pub summary_path: PathBuf,
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "optimizer",
    "axis",
    "value",
    "runs",
    "completed",
    "diverged",
    "failed",
    "final_loss_mean",
    "final_loss_std",
    "final_train_accuracy_mean",
    "final_train_accuracy_std",
    "final_test_accuracy_mean",
    "final_test_accuracy_std",
    "errors",
];

fn value_label(value: f64) -> String {
    format!("{value}")
}

/// Directory holding the run CSVs of one grid value.
pub fn point_dir(out: &Path, axis: SweepAxis, value: f64) -> PathBuf {
    out.join(format!("{axis}_{}", value_label(value)))
}

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Group runs by `(optimizer, value)` in first-seen order.
pub fn summarize(runs: &[SweepRun]) -> Vec<SweepPoint> {
    let mut keys: Vec<(OptimizerKind, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|&(o, v)| o == r.optimizer && v == r.value) {
            keys.push((r.optimizer, r.value));
        }
    }
    keys.into_iter()
        .map(|(optimizer, value)| {
            let group: Vec<&SweepRun> = runs
                .iter()
                .filter(|r| r.optimizer == optimizer && r.value == value)
                .collect();
            let ok: Vec<&RunSummary> = group
                .iter()
                .filter_map(|r| r.result.as_ref().ok())
                .filter(|s| s.completed())
                .collect();
            let collect = |f: fn(&RunSummary) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|s| f(s)).collect() };
            let mut errors: Vec<String> = group.iter().filter_map(|r| r.result.as_ref().err().cloned()).collect();
            errors.extend(
                group
                    .iter()
                    .filter_map(|r| r.result.as_ref().ok())
                    .filter_map(|s| s.divergence.clone().map(|d| format!("seed {}: {d}", s.seed))),
            );
            SweepPoint {
                optimizer,
                value,
                runs: group.len(),
                completed: ok.len(),
                diverged: group
                    .iter()
                    .filter(|r| r.result.as_ref().is_ok_and(|s| s.diverged))
                    .count(),
                failed: group.iter().filter(|r| r.result.is_err()).count(),
                final_loss: mean_std(&collect(|s| s.final_loss)),
                final_train_accuracy: mean_std(&collect(|s| s.final_train_accuracy)),
                final_test_accuracy: mean_std(&collect(|s| s.final_test_accuracy)),
                errors,
            }
        })
        .collect()
}

fn write_summary(path: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SUMMARY_COLUMNS)?;
    let pair = |p: Option<(f64, f64)>| match p {
        Some((m, s)) => [format_float(m), format_float(s)],
        None => [String::new(), String::new()],
    };
    for p in points {
        let [lm, ls] = pair(p.final_loss);
        let [am, as_] = pair(p.final_train_accuracy);
        let [tm, ts] = pair(p.final_test_accuracy);
        w.write_record([
            p.optimizer.name().to_string(),
            axis.name().to_string(),
            value_label(p.value),
            p.runs.to_string(),
            p.completed.to_string(),
            p.diverged.to_string(),
            p.failed.to_string(),
            lm,
            ls,
            am,
            as_,
            tm,
            ts,
            p.errors.join("; "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Records of a summary CSV, after checking its header.
pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<csv::StringRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    r.records().map(|rec| rec.map_err(Error::from)).collect()
}

/// Run the grid `values × optimizers × seeds` in parallel, one CSV per run
/// under `<output_dir>/<axis>_<value>/`, and write
/// `<output_dir>/summary.csv`.
///
/// A bad grid value is a config error before anything runs; a run that
/// fails is recorded in the summary and the rest carry on. A seed listed
/// more than once is rerun, with `_rep<k>` appended to the repeat's file
/// name.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    optimizers: &[OptimizerKind],
    seeds: &[u64],
) -> Result<SweepOutcome> {
    if values.is_empty() || optimizers.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let mut grid = Vec::new();
    for &value in values {
        let at_value = axis.apply(base, value)?;
        for &optimizer in optimizers {
            for (i, &seed) in seeds.iter().enumerate() {
                let config = RunConfig {
                    optimizer,
                    seed,
                    ..at_value.clone()
                };
                let repeat = seeds[..i].iter().filter(|&&s| s == seed).count();
                grid.push((value, repeat, config));
            }
        }
    }
    let out = &base.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let runs: Vec<SweepRun> = grid
        .par_iter()
        .map(|(value, repeat, config)| {
            let mut path = run_csv_path(&point_dir(out, axis, *value), config.optimizer, config.seed);
            if *repeat > 0 {
                path.set_file_name(format!("{}_seed{}_rep{repeat}.csv", config.optimizer, config.seed));
            }
            SweepRun {
                optimizer: config.optimizer,
                value: *value,
                seed: config.seed,
                result: run_to(config, &path)
                    .map(|r| r.summary)
                    .map_err(|e| format!("seed {}: {e}", config.seed)),
            }
        })
        .collect();

    let points = summarize(&runs);
    let summary_path = out.join("summary.csv");
    write_summary(&summary_path, axis, &points)?;
    Ok(SweepOutcome {
        runs,
        points,
        summary_path,
    })
}
