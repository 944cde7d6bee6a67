use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};

/// Row-major labelled feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() || n_features == 0 || n_classes < 2 {
            return Err(Error::Config(format!(
                "dataset needs n_samples >= 1, n_features >= 1, n_classes >= 2 \
                 (got {}, {n_features}, {n_classes})",
                labels.len()
            )));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Config(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.n_features, self.n_classes)
    }

    /// Indices grouped by label, ascending within each class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// Gaussian-mixture classification set: one unit-variance spherical Gaussian
/// per class, with class means drawn uniformly on the sphere of radius
/// `class_separation`. Labels cycle through the classes, so counts differ by
/// at most one.
pub fn gen_synthetic_dataset(
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    class_separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 || n_features == 0 || n_samples < n_classes {
        return Err(Error::Config(format!(
            "synthetic dataset needs n_classes >= 2, n_features >= 1 and \
             n_samples >= n_classes (got {n_samples}, {n_features}, {n_classes})"
        )));
    }
    if !(class_separation > 0.0 && class_separation.is_finite()) {
        return Err(Error::Config(format!(
            "class separation must be positive, got {class_separation}"
        )));
    }
    let mut rng = rng_from(derive_seed(seed, &[stream::DATASET]));

    let mut means = Vec::with_capacity(n_classes * n_features);
    for _ in 0..n_classes {
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = (0..n_features)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-24 {
                break v;
            }
        };
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        means.extend(dir.iter().map(|x| x / norm * class_separation));
    }

    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = i % n_classes;
        let mean = &means[label * n_features..(label + 1) * n_features];
        features.extend(
            mean.iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal)),
        );
        labels.push(label);
    }
    Dataset::new(features, labels, n_features, n_classes)
}

/// Stratified hold-out split. From every class, `round(test_fraction * count)`
/// randomly chosen samples go to the test set. Both outputs keep ascending
/// source order.
pub fn split_stratified(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng_from(derive_seed(seed, &[stream::SPLIT]));
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for mut members in dataset.indices_by_class() {
        members.shuffle(&mut rng);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    if test_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} leaves an empty train or test split"
        )));
    }
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

/// Reads `f0,...,f{d-1},label` CSV. Errors cite the 1-based file line, the
/// header being line 1.
pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .quoting(false)
        .from_reader(file);
    let err = |line: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .clone();
    let width = header.len();
    if width < 2 {
        return Err(err(1, "header needs at least one feature and a label".into()));
    }
    for (j, name) in header.iter().enumerate().take(width - 1) {
        if name.trim() != format!("f{j}") {
            return Err(err(1, format!("expected column `f{j}`, found `{name}`")));
        }
    }
    if header[width - 1].trim() != "label" {
        return Err(err(1, "last column must be `label`".into()));
    }

    let n_features = width - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(err(
                line,
                format!("expected {width} cells, found {}", record.len()),
            ));
        }
        for (j, cell) in record.iter().take(n_features).enumerate() {
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| err(line, format!("non-numeric cell `{cell}` in column f{j}")))?;
            if !value.is_finite() {
                return Err(err(line, format!("non-finite value in column f{j}")));
            }
            features.push(value);
        }
        let raw = record[n_features].trim();
        let label: i64 = raw
            .parse()
            .map_err(|_| err(line, format!("label `{raw}` is not an integer")))?;
        if label < 0 {
            return Err(err(line, format!("negative label {label}")));
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    if n_classes < 2 {
        return Err(err(1, "labels span fewer than two classes".into()));
    }
    Dataset::new(features, labels, n_features, n_classes)
}

pub fn write_dataset_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = (0..dataset.n_features())
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for i in 0..dataset.n_samples() {
        let mut line = String::new();
        for x in dataset.row(i) {
            // Display for f64 is the shortest round-tripping representation.
            line.push_str(&format!("{x},"));
        }
        line.push_str(&dataset.label(i).to_string());
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
