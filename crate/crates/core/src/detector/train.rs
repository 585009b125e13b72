//! One-vs-rest training with per-label threshold tuning and family selection.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::{self, BinaryModel, Family, ModelParams};
use super::{f_beta_counts, BankMap, DetectorError, FeatureVector, TrainedDetector};
use crate::corpus::LabelRegistry;
use crate::evalkit::CountedOutcomes;

/// Candidate decision thresholds: 0.05, 0.10, …, 0.95.
pub const THRESHOLD_GRID: [f64; 19] = {
    let mut grid = [0.0; 19];
    let mut i = 0;
    while i < 19 {
        grid[i] = (i + 1) as f64 / 20.0;
        i += 1;
    }
    grid
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: FeatureVector,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub families: Vec<Family>,
    pub beta: f64,
    pub seed: u64,
    pub params: ModelParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            beta: 0.5,
            seed: 0,
            params: ModelParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub threshold: f64,
    pub fbeta: f64,
    pub counts: CountedOutcomes,
    /// False when the label had too few positives and got a constant model.
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    /// Fβ over the validation decisions of all labels pooled together.
    pub micro_fbeta: f64,
    pub counts: CountedOutcomes,
    pub per_label: BTreeMap<String, LabelReport>,
}

fn label_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_vectors<'a>(
    examples: impl IntoIterator<Item = &'a TrainingExample>,
    registry: &LabelRegistry,
    dimension: usize,
) -> Result<(), DetectorError> {
    for ex in examples {
        if ex.features.registry_version != registry.version {
            return Err(DetectorError::VersionMismatch {
                expected: registry.version.clone(),
                found: ex.features.registry_version.clone(),
            });
        }
        if ex.features.len() != dimension {
            return Err(DetectorError::DimensionMismatch {
                expected: dimension,
                found: ex.features.len(),
            });
        }
    }
    Ok(())
}

fn counts_at(scores: &[f64], gold: &[bool], threshold: f64) -> CountedOutcomes {
    let mut counts = CountedOutcomes::default();
    for (&s, &g) in scores.iter().zip(gold) {
        counts.record(s >= threshold, g);
    }
    counts
}

/// Best threshold on the grid; equal Fβ goes to the higher threshold.
fn tune_threshold(scores: &[f64], gold: &[bool], beta: f64) -> (f64, f64, CountedOutcomes) {
    let mut best = (THRESHOLD_GRID[0], f64::NEG_INFINITY, CountedOutcomes::default());
    for &t in &THRESHOLD_GRID {
        let counts = counts_at(scores, gold, t);
        let f = f_beta_counts(counts, beta);
        if f >= best.1 {
            best = (t, f, counts);
        }
    }
    best
}

struct FittedFamily {
    report: FamilyReport,
    models: BTreeMap<String, BinaryModel>,
    thresholds: BTreeMap<String, f64>,
}

fn fit_family(
    family: Family,
    labels: &[(usize, String)],
    train: &[TrainingExample],
    valid: &[TrainingExample],
    config: &TrainConfig,
) -> FittedFamily {
    let x: Vec<Vec<i8>> = train.iter().map(|e| e.features.values.clone()).collect();
    let per_label: Vec<(String, BinaryModel, LabelReport)> = labels
        .par_iter()
        .map(|(index, label)| {
            let y: Vec<bool> = train.iter().map(|e| e.labels.contains(label)).collect();
            let trained = y.iter().filter(|&&v| v).count() >= 2;
            let model = if trained {
                models::fit(family, &x, &y, &config.params, label_seed(config.seed, *index))
            } else {
                BinaryModel::constant_negative()
            };
            let scores: Vec<f64> = valid.iter().map(|e| model.score(&e.features.values)).collect();
            let gold: Vec<bool> = valid.iter().map(|e| e.labels.contains(label)).collect();
            let (threshold, fbeta, counts) = tune_threshold(&scores, &gold, config.beta);
            let fbeta = fbeta.max(0.0);
            (
                label.clone(),
                model,
                LabelReport {
                    threshold,
                    fbeta,
                    counts,
                    trained,
                },
            )
        })
        .collect();
    let mut pooled = CountedOutcomes::default();
    let mut models = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for (label, model, report) in per_label {
        pooled = pooled + report.counts;
        thresholds.insert(label.clone(), report.threshold);
        models.insert(label.clone(), model);
        reports.insert(label, report);
    }
    FittedFamily {
        report: FamilyReport {
            family,
            micro_fbeta: f_beta_counts(pooled, config.beta),
            counts: pooled,
            per_label: reports,
        },
        models,
        thresholds,
    }
}

/// Fits every family one-vs-rest on `train`, tunes per-label thresholds on
/// `valid`, and keeps the family with the best pooled validation Fβ (the
/// earlier family on ties). Segments labelled only with a fallback label are
/// negatives for every classifier.
pub fn train_detector(
    train: &[TrainingExample],
    valid: &[TrainingExample],
    registry: &LabelRegistry,
    config: &TrainConfig,
) -> Result<TrainedDetector, DetectorError> {
    if config.families.is_empty() {
        return Err(DetectorError::NoFamilies);
    }
    if !(config.beta > 0.0 && config.beta.is_finite()) {
        return Err(DetectorError::BadBeta(config.beta));
    }
    let first = train.first().ok_or(DetectorError::EmptyTraining)?;
    if valid.is_empty() {
        return Err(DetectorError::EmptyValidation);
    }
    let dimension = first.features.len();
    check_vectors(train.iter().chain(valid), registry, dimension)?;
    let labels: Vec<(usize, String)> = registry
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind.is_detectable())
        .map(|(i, l)| (i, l.key.clone()))
        .collect();
    let trainable = labels
        .iter()
        .any(|(_, l)| train.iter().filter(|e| e.labels.contains(l)).count() >= 2);
    if !trainable {
        return Err(DetectorError::NoTrainableLabel);
    }

    let mut best: Option<FittedFamily> = None;
    let mut reports = Vec::with_capacity(config.families.len());
    for &family in &config.families {
        let fitted = fit_family(family, &labels, train, valid, config);
        log::info!("{family}: validation micro F{} = {:.4}", config.beta, fitted.report.micro_fbeta);
        reports.push(fitted.report.clone());
        if best
            .as_ref()
            .is_none_or(|b| fitted.report.micro_fbeta > b.report.micro_fbeta)
        {
            best = Some(fitted);
        }
    }
    let best = best.expect("at least one family");
    Ok(TrainedDetector {
        format_version: crate::FORMAT_VERSION.into(),
        family: best.report.family,
        seed: config.seed,
        beta_target: config.beta,
        registry_version: registry.version.clone(),
        dimension,
        none_label: registry.none_label().key.clone(),
        thresholds: best.thresholds,
        models: best.models,
        question_banks: BankMap::new(),
        validation: reports,
    })
}

/// Pooled and per-label counts of the detector's raw decisions on `examples`.
pub fn evaluate_detector(
    detector: &TrainedDetector,
    examples: &[TrainingExample],
) -> Result<(CountedOutcomes, BTreeMap<String, CountedOutcomes>), DetectorError> {
    let mut per_label: BTreeMap<String, CountedOutcomes> =
        detector.models.keys().map(|k| (k.clone(), CountedOutcomes::default())).collect();
    for ex in examples {
        let prediction = detector.predict(&ex.features)?;
        for (label, &decision) in &prediction.decisions {
            per_label
                .get_mut(label)
                .expect("label has a model")
                .record(decision, ex.labels.contains(label));
        }
    }
    let pooled = per_label.values().fold(CountedOutcomes::default(), |acc, &c| acc + c);
    Ok((pooled, per_label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub family: Family,
    pub test_fbeta: f64,
    pub counts: CountedOutcomes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub beta: f64,
    pub folds: Vec<FoldReport>,
    pub mean_fbeta: f64,
    /// Fβ over the test decisions of every fold pooled together.
    pub pooled_fbeta: f64,
}

/// k-fold evaluation: fold `i` is the test set, fold `i+1 (mod k)` tunes
/// thresholds and picks the family, the rest train.
pub fn cross_validate(
    folds: &[Vec<TrainingExample>],
    registry: &LabelRegistry,
    config: &TrainConfig,
) -> Result<CrossValReport, DetectorError> {
    let k = folds.len();
    if k < 3 {
        return Err(DetectorError::TooFewFolds(k));
    }
    let mut reports = Vec::with_capacity(k);
    let mut pooled = CountedOutcomes::default();
    for i in 0..k {
        let v = (i + 1) % k;
        let train: Vec<TrainingExample> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && *j != v)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        let detector = train_detector(&train, &folds[v], registry, config)?;
        let (counts, _) = evaluate_detector(&detector, &folds[i])?;
        pooled = pooled + counts;
        reports.push(FoldReport {
            fold: i,
            family: detector.family,
            test_fbeta: f_beta_counts(counts, config.beta),
            counts,
        });
    }
    let mean_fbeta = reports.iter().map(|r| r.test_fbeta).sum::<f64>() / k as f64;
    Ok(CrossValReport {
        beta: config.beta,
        folds: reports,
        mean_fbeta,
        pooled_fbeta: f_beta_counts(pooled, config.beta),
    })
}
