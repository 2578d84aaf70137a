use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const RUN_COLUMNS: [&str; 12] = [
    "step",
    "epoch",
    "train_loss",
    "lr_global",
    "lr_scale",
    "lr_effective",
    "beta_raw",
    "beta_clamped",
    "grad_norm",
    "wall_ms",
    "train_accuracy",
    "test_accuracy",
];

/// One logged step. Optional cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub step: usize,
    /// Epochs completed after this step.
    pub epoch: f64,
    pub train_loss: f64,
    pub lr_global: f64,
    pub lr_scale: f64,
    pub lr_effective: f64,
    pub beta_raw: Option<f64>,
    pub beta_clamped: Option<f64>,
    pub grad_norm: f64,
    pub wall_ms: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl RunRow {
    fn cells(&self) -> [String; 12] {
        [
            self.step.to_string(),
            format_float(self.epoch),
            format_float(self.train_loss),
            format_float(self.lr_global),
            format_float(self.lr_scale),
            format_float(self.lr_effective),
            format_opt(self.beta_raw),
            format_opt(self.beta_clamped),
            format_float(self.grad_norm),
            format_float(self.wall_ms),
            format_opt(self.train_accuracy),
            format_opt(self.test_accuracy),
        ]
    }
}

/// Appends rows to a run CSV, flushing after each so that an interrupted
/// run leaves a readable prefix.
pub struct RunWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    last_step: Option<usize>,
}

impl RunWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(RUN_COLUMNS)?;
        inner.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            inner,
            last_step: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, row: &RunRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.step <= s) {
            return Err(Error::InvalidArgument(format!(
                "run rows must have increasing steps: {} after {}",
                row.step,
                self.last_step.unwrap()
            )));
        }
        self.inner.write_record(row.cells())?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        self.last_step = Some(row.step);
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        let mut file = self
            .inner
            .into_inner()
            .map_err(|e| Error::io(&self.path, e.into_error()))?;
        file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: u64, name: &str, cell: &str) -> Result<T> {
    cell.parse().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("bad {name} value {cell:?}"),
    })
}

fn parse_opt(path: &Path, line: u64, name: &str, cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(path, line, name, cell).map(Some)
    }
}

/// Read a run CSV back. A file holding only the header yields no rows, and
/// a final line without its newline (a write cut short) is ignored.
pub fn read_run_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let path = path.as_ref();
    let mut bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.last() != Some(&b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep > 0 {
            bytes.truncate(keep);
        }
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != RUN_COLUMNS {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let f = |i: usize| parse_cell::<f64>(path, line, RUN_COLUMNS[i], &record[i]);
        let o = |i: usize| parse_opt(path, line, RUN_COLUMNS[i], &record[i]);
        rows.push(RunRow {
            step: parse_cell(path, line, "step", &record[0])?,
            epoch: f(1)?,
            train_loss: f(2)?,
            lr_global: f(3)?,
            lr_scale: f(4)?,
            lr_effective: f(5)?,
            beta_raw: o(6)?,
            beta_clamped: o(7)?,
            grad_norm: f(8)?,
            wall_ms: f(9)?,
            train_accuracy: o(10)?,
            test_accuracy: o(11)?,
        });
    }
    Ok(rows)
}
