//! Dataset ingestion: CSV files with mixed numeric/categorical columns, and
//! synthetic tasks with exactly known class probabilities.

use crate::error::{Error, Result};
use crate::nn::SoftTargetBatch;
use crate::seeds;
use crate::simplex::ProbabilityVector;
use crate::synth::{
    BlobModel, CondModel, FeatureSampler, LinearSoftmax, SyntheticDistribution,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// One classified example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A fixed-order labeled sample with a known class count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptySample);
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if num_classes < 2 {
            return Err(Error::SingleClass);
        }
        let d = features[0].len();
        for x in &features {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::LabelOutOfRange { label: y, classes: num_classes });
            }
        }
        Ok(Self { features, labels, num_classes })
    }

    pub fn from_examples(examples: Vec<LabeledExample>) -> Result<Self> {
        let num_classes = examples.iter().map(|e| e.label + 1).max().unwrap_or(0).max(2);
        let (features, labels) = examples.into_iter().map(|e| (e.features, e.label)).unzip();
        Self::new(features, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// One-hot training batch over the whole dataset.
    pub fn one_hot_batch(&self) -> Result<SoftTargetBatch> {
        SoftTargetBatch::from_labels(self.features.clone(), &self.labels, self.num_classes)
    }

    /// Fraction of predictions whose hard label matches the stored label.
    pub fn accuracy(&self, predictions: &[ProbabilityVector]) -> Result<f64> {
        if predictions.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: predictions.len(),
            });
        }
        let correct = predictions
            .iter()
            .zip(&self.labels)
            .filter(|(p, &y)| p.hard_label() == y)
            .count();
        Ok(correct as f64 / self.len() as f64)
    }
}

/// How to treat non-numeric feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoricalPolicy {
    /// Expand into indicator columns, vocabulary in first-appearance order.
    OneHot,
    /// Fail on any non-numeric feature column.
    Reject,
}

/// Vocabulary of one categorical column, in first-appearance order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnVocabulary {
    pub column: String,
    pub values: Vec<String>,
}

/// What the loader decided about a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    pub label_values: Vec<String>,
    pub numeric_columns: Vec<String>,
    pub categorical: Vec<ColumnVocabulary>,
}

/// Load a CSV with a header row. Numeric columns become f64 features,
/// non-numeric ones follow `policy`, and the label column maps classes to
/// 0..m in first-appearance order. Fully deterministic.
pub fn load_csv_dataset(
    path: &Path,
    label_column: &str,
    policy: CategoricalPolicy,
) -> Result<(Dataset, CsvSchema)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_owned()))?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }

    // A feature column is numeric iff every cell parses as f64.
    let mut numeric = vec![true; headers.len()];
    for (r, row) in rows.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(Error::UnparsableCell {
                row: r + 1,
                column: format!("<record with {} fields>", row.len()),
                value: String::new(),
            });
        }
        for (c, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::UnparsableCell {
                    row: r + 1,
                    column: headers[c].clone(),
                    value: cell.clone(),
                });
            }
            if c != label_idx && cell.trim().parse::<f64>().is_err() {
                numeric[c] = false;
            }
        }
    }

    let mut categorical_vocab: Vec<ColumnVocabulary> = Vec::new();
    let mut vocab_index: HashMap<usize, usize> = HashMap::new();
    for (c, header) in headers.iter().enumerate() {
        if c == label_idx || numeric[c] {
            continue;
        }
        if policy == CategoricalPolicy::Reject {
            let bad = rows
                .iter()
                .find(|row| row[c].trim().parse::<f64>().is_err())
                .map(|row| row[c].clone())
                .unwrap_or_default();
            return Err(Error::CategoricalRejected { column: header.clone(), value: bad });
        }
        let mut values = Vec::new();
        for row in &rows {
            if !values.contains(&row[c]) {
                values.push(row[c].clone());
            }
        }
        vocab_index.insert(c, categorical_vocab.len());
        categorical_vocab.push(ColumnVocabulary { column: header.clone(), values });
    }

    let mut label_values: Vec<String> = Vec::new();
    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let mut x = Vec::new();
        for (c, cell) in row.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            if numeric[c] {
                let v: f64 = cell.trim().parse().map_err(|_| Error::UnparsableCell {
                    row: r + 1,
                    column: headers[c].clone(),
                    value: cell.clone(),
                })?;
                x.push(v);
            } else {
                let vocab = &categorical_vocab[vocab_index[&c]];
                let hot = vocab.values.iter().position(|v| v == cell).expect("vocab built above");
                for k in 0..vocab.values.len() {
                    x.push(if k == hot { 1.0 } else { 0.0 });
                }
            }
        }
        let label_cell = &row[label_idx];
        let label = match label_values.iter().position(|v| v == label_cell) {
            Some(i) => i,
            None => {
                label_values.push(label_cell.clone());
                label_values.len() - 1
            }
        };
        features.push(x);
        labels.push(label);
    }
    if label_values.len() < 2 {
        return Err(Error::SingleClass);
    }

    let schema = CsvSchema {
        label_column: label_column.to_owned(),
        label_values,
        numeric_columns: headers
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != label_idx && numeric[c])
            .map(|(_, h)| h.clone())
            .collect(),
        categorical: categorical_vocab,
    };
    let num_classes = schema.label_values.len();
    Ok((Dataset::new(features, labels, num_classes)?, schema))
}

/// Families of synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    GaussianBlobs,
    LogisticGroundTruth,
}

/// Build a synthetic dataset together with the distribution that generated
/// it, so p(x) is available exactly.
///
/// The shipped base model g is a noise-perturbed copy of the true model;
/// swap it via [`SyntheticDistribution::with_base`] to realize g ≡ p.
pub fn make_synthetic(
    kind: SyntheticKind,
    dims: usize,
    classes: usize,
    n: usize,
    seed: u64,
) -> Result<(Dataset, SyntheticDistribution)> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if dims == 0 {
        return Err(Error::InvalidArgument {
            name: "dims",
            reason: "must be positive".into(),
        });
    }
    if classes < 2 {
        return Err(Error::SingleClass);
    }
    let mut rng = seeds::rng(seed, &[0xD157]);
    let dist = match kind {
        SyntheticKind::GaussianBlobs => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            let centers: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..dims).map(|_| 2.5 * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let sigma = 1.3;
            let priors = vec![1.0 / classes as f64; classes];
            let truth = BlobModel { centers: centers.clone(), sigma, priors: priors.clone() };
            let shifted: Vec<Vec<f64>> = centers
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|&v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let base = BlobModel { centers: shifted, sigma, priors };
            SyntheticDistribution::new(
                CondModel::Blobs(truth.clone()),
                CondModel::Blobs(base),
                FeatureSampler::Blobs(truth),
                seed,
            )?
        }
        SyntheticKind::LogisticGroundTruth => {
            // Moderate coefficient scale keeps the labels genuinely noisy.
            let truth = LinearSoftmax::random(dims, classes, 0.8, &mut rng);
            let base = truth.perturbed(0.25, &mut rng);
            SyntheticDistribution::new(
                CondModel::Linear(truth),
                CondModel::Linear(base),
                FeatureSampler::Gaussian { dims },
                seed,
            )?
        }
    };

    let features = dist.sample_features(n, 1);
    let mut label_rng = seeds::rng(seed, &[0x1ABE1]);
    let labels: Vec<usize> = features.iter().map(|x| dist.sample_label(x, &mut label_rng)).collect();
    let dataset = Dataset::new(features, labels, classes)?;
    Ok((dataset, dist))
}
