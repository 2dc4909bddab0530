//! From-scratch classifiers (multinomial logistic regression, Gaussian naive
//! Bayes, one-vs-rest linear SVM) and a small feed-forward network.

mod gnb;
mod logreg;
mod mlp;
mod svm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{apply_standardizer, fit_standardizer, DataMatrix, StandardizerParams};
use crate::error::{Error, Result};
use crate::rng::seeded_stream;

pub use gnb::{train_gnb, GNB_DEFAULT_SMOOTHING};
pub use logreg::{logreg_loss_grad, train_logreg};
pub use mlp::{
    mlp_loss_grad, mlp_predict_proba, mlp_train_local, mlp_train_local_traced, Activation, ModelParams,
};
pub use svm::{svm_objective, train_svm, train_svm_traced};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
    /// Index of the first epoch; per-epoch shuffles are keyed by the global
    /// epoch index so split runs reproduce one long run.
    #[serde(default)]
    pub epoch_offset: u64,
}

impl TrainConfig {
    pub fn logreg_default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs: 500, batch_size: 32, seed: 0, l2: 1e-4, epoch_offset: 0 }
    }

    pub fn svm_default() -> Self {
        TrainConfig { learning_rate: 0.05, epochs: 500, batch_size: 8, seed: 0, l2: 1e-3, epoch_offset: 0 }
    }

    pub fn mlp_default() -> Self {
        TrainConfig { learning_rate: 0.01, epochs: 5, batch_size: 32, seed: 0, l2: 0.0, epoch_offset: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(self.l2 >= 0.0) {
            return Err(Error::invalid("learning rate and batch size must be positive, l2 non-negative"));
        }
        Ok(())
    }
}

/// Row visiting order for one epoch. A single full batch keeps the natural
/// order; otherwise rows are shuffled with a stream keyed by the global epoch.
pub(crate) fn epoch_batches(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.batch_size < n {
        order.shuffle(&mut seeded_stream(cfg.seed, cfg.epoch_offset + epoch as u64));
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logreg,
    Gnb,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Logreg, ClassifierKind::Gnb, ClassifierKind::Svm];

    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::Logreg => "Logistic Regression",
            ClassifierKind::Gnb => "Naive Bayes",
            ClassifierKind::Svm => "Support Vector Machine",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::Gnb => "gnb",
            ClassifierKind::Svm => "svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ClassifierKind::Logreg),
            "gnb" => Ok(ClassifierKind::Gnb),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(Error::invalid(format!("unknown classifier {other:?} (expected logreg|gnb|svm)"))),
        }
    }
}

/// Kind-specific parameters; matrices are row-major, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierParams {
    /// `weights`: C × (d+1), bias last.
    Logreg { weights: Vec<f64> },
    Gnb { means: Vec<f64>, variances: Vec<f64>, log_priors: Vec<f64> },
    /// One-vs-rest hyperplanes, C × (d+1), bias last.
    Svm { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: u32,
    pub classes: Vec<String>,
    pub n_features: usize,
    /// Input scaling fitted on the training rows (gradient-trained kinds only).
    pub standardizer: Option<StandardizerParams>,
    pub params: ClassifierParams,
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self.params {
            ClassifierParams::Logreg { .. } => ClassifierKind::Logreg,
            ClassifierParams::Gnb { .. } => ClassifierKind::Gnb,
            ClassifierParams::Svm { .. } => ClassifierKind::Svm,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn prepare(&self, rows: &DataMatrix) -> Result<DataMatrix> {
        if rows.n_features() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: rows.n_features() });
        }
        match &self.standardizer {
            Some(s) => apply_standardizer(s, rows),
            None => Ok(rows.clone()),
        }
    }

    /// Per-row class scores: probabilities for logreg and GNB, decision
    /// values for the SVM.
    pub fn scores(&self, rows: &DataMatrix) -> Result<Vec<Vec<f64>>> {
        let x = self.prepare(rows)?;
        Ok(x.rows().map(|r| self.row_scores(r)).collect())
    }

    fn row_scores(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        match &self.params {
            ClassifierParams::Logreg { weights } => softmax(&linear_scores(weights, d, x)),
            ClassifierParams::Gnb { means, variances, log_priors } => {
                softmax(&gnb::joint_log_likelihood(means, variances, log_priors, d, x))
            }
            ClassifierParams::Svm { weights } => linear_scores(weights, d, x),
        }
    }

    /// Predicted class indices; ties go to the lowest index.
    pub fn predict_indices(&self, rows: &DataMatrix) -> Result<Vec<usize>> {
        let x = self.prepare(rows)?;
        let d = self.n_features;
        Ok(x.rows()
            .map(|r| match &self.params {
                ClassifierParams::Gnb { means, variances, log_priors } => {
                    argmax(&gnb::joint_log_likelihood(means, variances, log_priors, d, r))
                }
                ClassifierParams::Logreg { weights } | ClassifierParams::Svm { weights } => {
                    argmax(&linear_scores(weights, d, r))
                }
            })
            .collect())
    }

    pub fn predict(&self, rows: &DataMatrix) -> Result<Vec<String>> {
        Ok(self.predict_indices(rows)?.into_iter().map(|i| self.classes[i].clone()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: ClassifierModel =
            serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported classifier version {}", m.version)));
        }
        Ok(m)
    }
}

/// Train a classifier of `kind` with its default settings, seeded.
pub fn train_classifier(kind: ClassifierKind, data: &DataMatrix, seed: u64) -> Result<ClassifierModel> {
    match kind {
        ClassifierKind::Logreg => train_logreg(data, &TrainConfig::logreg_default().with_seed(seed)),
        ClassifierKind::Gnb => train_gnb(data, GNB_DEFAULT_SMOOTHING),
        ClassifierKind::Svm => train_svm(data, &TrainConfig::svm_default().with_seed(seed)),
    }
}

/// Fraction of rows whose predicted label equals the true label.
pub fn accuracy(model: &ClassifierModel, data: &DataMatrix) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let truth = data.require_labels()?;
    let pred = model.predict(data)?;
    Ok(label_accuracy(&pred, truth))
}

pub fn label_accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Rows and class indices ready for a gradient-trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedData {
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl EncodedData {
    /// Encode labels against `classes`; unknown labels are an error.
    pub fn new(data: &DataMatrix, classes: &[String], standardizer: Option<&StandardizerParams>) -> Result<Self> {
        let labels = data.require_labels()?;
        let y = labels
            .iter()
            .map(|l| {
                classes
                    .binary_search(l)
                    .map_err(|_| Error::invalid(format!("label {l:?} not in class list")))
            })
            .collect::<Result<Vec<_>>>()?;
        let x = match standardizer {
            Some(s) => apply_standardizer(s, data)?.values().to_vec(),
            None => data.values().to_vec(),
        };
        Ok(EncodedData { d: data.n_features(), x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Sorted distinct classes, requiring at least two.
pub(crate) fn class_list(data: &DataMatrix) -> Result<Vec<String>> {
    let classes = data.classes()?;
    if classes.len() < 2 {
        return Err(Error::invalid("training data must contain at least two classes"));
    }
    Ok(classes)
}

pub(crate) fn fitted_standardizer(data: &DataMatrix) -> Result<StandardizerParams> {
    fit_standardizer(data)
}

pub(crate) fn linear_scores(weights: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    weights
        .chunks_exact(d + 1)
        .map(|w| w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d])
        .collect()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
