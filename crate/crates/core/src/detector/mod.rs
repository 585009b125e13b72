//! Issue detection: per-label question banks, LLM question answering into
//! ternary feature vectors, one-vs-rest classifiers and thresholded prediction.

mod featurize;
pub mod models;
mod questions;
mod train;
mod zero_shot;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::CountedOutcomes;
use crate::gateway::GatewayError;

pub use featurize::{featurize, featurize_batch, parse_answer};
pub use models::{BinaryModel, Family, ModelParams};
pub use questions::{generate_question_bank, generic_bank, parse_question_list, BankOptions, BankReport};
pub use train::{
    cross_validate, evaluate_detector, train_detector, CrossValReport, FamilyReport, FoldReport, LabelReport,
    TrainConfig, TrainingExample, THRESHOLD_GRID,
};
pub use zero_shot::{detect_zero_shot, issue_catalog, parse_label_list};

/// Default number of questions per label.
pub const DEFAULT_F_C: usize = 10;
/// Longest accepted question, in characters.
pub const MAX_QUESTION_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no model families given")]
    NoFamilies,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("no trainable label: every label has fewer than 2 positive training examples")]
    NoTrainableLabel,
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("feature vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("registry version mismatch: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },
    #[error("label {0:?} is not in the registry")]
    UnknownLabel(String),
    #[error("no question bank for label {0:?}")]
    MissingBank(String),
    #[error("question bank for {label:?} is invalid: {reason}")]
    InvalidBank { label: String, reason: String },
    #[error("threshold {value} for {label:?} is outside [0, 1]")]
    InvalidThreshold { label: String, value: f64 },
    #[error("no exemplar segments for label {0:?}")]
    NoExemplars(String),
    #[error("question bank generation failed for {label:?}: {reason}")]
    BankGeneration { label: String, reason: String },
    #[error("gateway failure for label {label:?}, question {question}: {source}")]
    Featurize {
        label: String,
        question: usize,
        #[source]
        source: GatewayError,
    },
    #[error("gateway failure while {context}: {source}")]
    Gateway {
        context: String,
        #[source]
        source: GatewayError,
    },
    #[error("cross-validation needs at least 3 folds, got {0}")]
    TooFewFolds(usize),
    #[error("detector file: {0}")]
    Io(#[from] std::io::Error),
    #[error("detector file is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// Weighted harmonic mean of precision and recall; 0 when undefined.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denominator = b2 * precision + recall;
    if denominator <= 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denominator
    }
}

/// Fβ straight from confusion counts.
pub fn f_beta_counts(counts: CountedOutcomes, beta: f64) -> f64 {
    let (p, r) = crate::evalkit::precision_recall(counts);
    f_beta(p, r, beta)
}

/// The questions asked for one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionBank {
    pub label_key: String,
    pub questions: Vec<String>,
}

impl QuestionBank {
    pub fn f_c(&self) -> usize {
        self.questions.len()
    }

    pub fn validate(&self, f_c: usize) -> Result<(), DetectorError> {
        let invalid = |reason: String| DetectorError::InvalidBank {
            label: self.label_key.clone(),
            reason,
        };
        if self.questions.len() != f_c {
            return Err(invalid(format!("{} questions, expected {f_c}", self.questions.len())));
        }
        if let Some(q) = self.questions.iter().find(|q| !is_valid_question(q)) {
            return Err(invalid(format!("bad question {q:?}")));
        }
        Ok(())
    }
}

pub(crate) fn is_valid_question(q: &str) -> bool {
    !q.trim().is_empty() && q.chars().count() <= MAX_QUESTION_CHARS
}

/// All banks, keyed by label; the on-disk question-bank file.
pub type BankMap = BTreeMap<String, Vec<String>>;

pub fn banks_from_list(banks: impl IntoIterator<Item = QuestionBank>) -> BankMap {
    banks.into_iter().map(|b| (b.label_key, b.questions)).collect()
}

pub fn load_banks(path: impl AsRef<Path>) -> Result<BankMap, DetectorError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Ternary answers for every (label, question) pair, label blocks in
/// registry order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<i8>,
    pub registry_version: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub scores: BTreeMap<String, f64>,
    pub decisions: BTreeMap<String, bool>,
    /// Firing labels, or exactly the none label when nothing fires.
    pub labels: BTreeSet<String>,
}

impl PredictionResult {
    pub fn from_scores(scores: BTreeMap<String, f64>, thresholds: &BTreeMap<String, f64>, none_label: &str) -> Self {
        let decisions: BTreeMap<String, bool> = scores
            .iter()
            .map(|(k, &s)| (k.clone(), s >= thresholds.get(k).copied().unwrap_or(1.0)))
            .collect();
        let mut labels: BTreeSet<String> = decisions.iter().filter(|(_, &d)| d).map(|(k, _)| k.clone()).collect();
        if labels.is_empty() {
            labels.insert(none_label.to_string());
        }
        Self {
            scores,
            decisions,
            labels,
        }
    }

    pub fn is_none(&self, none_label: &str) -> bool {
        self.labels.len() == 1 && self.labels.contains(none_label)
    }
}

/// A trained one-vs-rest detector, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub format_version: String,
    pub family: Family,
    pub seed: u64,
    pub beta_target: f64,
    pub registry_version: String,
    /// Expected feature-vector length.
    pub dimension: usize,
    pub none_label: String,
    pub thresholds: BTreeMap<String, f64>,
    pub models: BTreeMap<String, BinaryModel>,
    #[serde(default)]
    pub question_banks: BankMap,
    /// Validation results of every family tried, in the order tried.
    #[serde(default)]
    pub validation: Vec<FamilyReport>,
}

impl TrainedDetector {
    pub fn with_question_banks(mut self, banks: BankMap) -> Self {
        self.question_banks = banks;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detector serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let detector: Self = serde_json::from_str(text)?;
        if let Some((label, t)) = detector.thresholds.iter().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
            return Err(DetectorError::InvalidThreshold {
                label: label.clone(),
                value: *t,
            });
        }
        Ok(detector)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DetectorError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Scores every label and applies the stored thresholds.
    pub fn predict(&self, features: &FeatureVector) -> Result<PredictionResult, DetectorError> {
        self.check(features)?;
        let scores = self
            .models
            .iter()
            .map(|(label, model)| (label.clone(), model.score(&features.values)))
            .collect();
        Ok(PredictionResult::from_scores(scores, &self.thresholds, &self.none_label))
    }

    fn check(&self, features: &FeatureVector) -> Result<(), DetectorError> {
        if features.registry_version != self.registry_version {
            return Err(DetectorError::VersionMismatch {
                expected: self.registry_version.clone(),
                found: features.registry_version.clone(),
            });
        }
        if features.len() != self.dimension {
            return Err(DetectorError::DimensionMismatch {
                expected: self.dimension,
                found: features.len(),
            });
        }
        Ok(())
    }
}

pub fn predict(features: &FeatureVector, detector: &TrainedDetector) -> Result<PredictionResult, DetectorError> {
    detector.predict(features)
}
