use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Labelled samples with dense feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// Build a dataset from row-major features.
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("dataset has no samples".into()));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be >= 1".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::Dimension {
                expected: labels.len() * feature_dim,
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} not below num_classes {num_classes}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("dataset features"));
        }
        Ok(Self {
            name: name.into(),
            features,
            feature_dim,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

/// Gaussian class clusters; see [`make_synthetic_split`].
pub fn make_synthetic_classification(
    num_samples: usize,
    feature_dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    make_synthetic_split(num_samples, 0, feature_dim, num_classes, separation, seed).map(|(d, _)| d)
}

/// Train and held-out sets drawn from the same Gaussian class clusters.
///
/// Class centres are `separation * z` with `z ~ N(0, I)`; each sample is its
/// centre plus unit Gaussian noise. Labels cycle through the classes before
/// shuffling, so class counts differ by at most one. The test set is `None`
/// when `test_samples == 0`.
pub fn make_synthetic_split(
    train_samples: usize,
    test_samples: usize,
    feature_dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    if train_samples == 0 || feature_dim == 0 {
        return Err(Error::InvalidArgument(
            "num_samples and feature_dim must be >= 1".into(),
        ));
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation must be finite and >= 0, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..num_classes * feature_dim)
        .map(|_| separation * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();

    let draw = |n: usize, stream: u64, name: String| -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
        labels.shuffle(&mut rng);
        let mut features = Vec::with_capacity(n * feature_dim);
        for &label in &labels {
            let centre = &centres[label * feature_dim..(label + 1) * feature_dim];
            for &c in centre {
                let noise: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                features.push(c + noise);
            }
        }
        Dataset::new(name, features, feature_dim, labels, num_classes)
    };

    let train = draw(train_samples, 1, format!("synthetic-{seed}-train"))?;
    let test = if test_samples > 0 {
        Some(draw(test_samples, 2, format!("synthetic-{seed}-test"))?)
    } else {
        None
    };
    Ok((train, test))
}

/// Read a CSV file with a header row. `label_column` holds class names,
/// mapped to dense ids in order of first appearance; every other column must
/// be a finite decimal number.
pub fn load_csv_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MalformedRow {
            path: path.to_owned(),
            line: 1,
            message: format!("label column {label_column:?} not found in header"),
        })?;
    let feature_dim = headers.len() - 1;
    if feature_dim == 0 {
        return Err(Error::MalformedRow {
            path: path.to_owned(),
            line: 1,
            message: "no feature columns".into(),
        });
    }

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |message: String| Error::MalformedRow {
            path: path.to_owned(),
            line,
            message,
        };
        if record.len() != headers.len() {
            return Err(malformed(format!(
                "expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let next = ids.len();
                labels.push(*ids.entry(cell.to_owned()).or_insert(next));
                continue;
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| malformed(format!("column {:?}: {cell:?} is not a number", &headers[col])))?;
            if !value.is_finite() {
                return Err(malformed(format!(
                    "column {:?}: non-finite value {cell:?}",
                    &headers[col]
                )));
            }
            features.push(value);
        }
    }

    if labels.is_empty() {
        return Err(Error::NoSamples {
            path: path.to_owned(),
        });
    }
    // single-class files still get two output slots so softmax models are well-posed
    let num_classes = ids.len().max(2);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, features, feature_dim, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_labels_follow_first_occurrence() {
        let f = write_tmp("x1,label,x2\n1.0,a,2.0\n3,b,4\n-5e-1,a,6\n");
        let d = load_csv_dataset(f.path(), "label").unwrap();
        assert_eq!(d.num_samples(), 3);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.sample(2), &[-0.5, 6.0]);
    }

    #[test]
    fn csv_empty_data_section() {
        let f = write_tmp("x,label\n");
        let err = load_csv_dataset(f.path(), "label").unwrap_err();
        assert!(matches!(err, Error::NoSamples { .. }));
        assert!(err.to_string().contains("no samples"));
    }

    #[test]
    fn csv_nan_cell_names_line() {
        let f = write_tmp("x,label\n1.0,a\nNaN,b\n");
        match load_csv_dataset(f.path(), "label").unwrap_err() {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_non_numeric_and_missing() {
        let f = write_tmp("x,label\nabc,a\n");
        assert!(matches!(
            load_csv_dataset(f.path(), "label"),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        let f = write_tmp("x,y\n1,2\n");
        assert!(matches!(
            load_csv_dataset(f.path(), "label"),
            Err(Error::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            load_csv_dataset("/nonexistent/file.csv", "label"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let d = make_synthetic_classification(103, 3, 2, 1.5, 11).unwrap();
        let ones = d.labels().iter().filter(|&&l| l == 1).count();
        let zeros = d.num_samples() - ones;
        assert!(zeros.abs_diff(ones) <= 1);
        assert_eq!(d, make_synthetic_classification(103, 3, 2, 1.5, 11).unwrap());
        assert_ne!(d, make_synthetic_classification(103, 3, 2, 1.5, 12).unwrap());
    }

    #[test]
    fn synthetic_split_shares_centres() {
        let (train, test) = make_synthetic_split(500, 500, 2, 2, 8.0, 3).unwrap();
        let test = test.unwrap();
        let mean = |d: &Dataset, class: usize| -> f64 {
            let idx: Vec<usize> = (0..d.num_samples()).filter(|&i| d.label(i) == class).collect();
            idx.iter().map(|&i| d.sample(i)[0]).sum::<f64>() / idx.len() as f64
        };
        assert!((mean(&train, 0) - mean(&test, 0)).abs() < 0.3);
        assert!((mean(&train, 1) - mean(&test, 1)).abs() < 0.3);
    }

    #[test]
    fn synthetic_rejects_bad_arguments() {
        assert!(make_synthetic_classification(0, 2, 2, 1.0, 0).is_err());
        assert!(make_synthetic_classification(10, 2, 1, 1.0, 0).is_err());
        assert!(make_synthetic_classification(10, 2, 2, -1.0, 0).is_err());
    }
}
