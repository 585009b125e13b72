//! Shared metrics: precision/recall, F-beta grids, Krippendorff's alpha and
//! label-distribution distance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::hash::Hash;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::detector::f_beta;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("alpha is undefined: {0}")]
    UndefinedAlpha(&'static str),
    #[error("distribution distance needs non-empty label multisets on both sides")]
    EmptyDistribution,
    #[error("beta grid must be non-empty with every beta > 0")]
    BadGrid,
}

/// Binary confusion counts. `fn_` because `fn` is a keyword.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountedOutcomes {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl CountedOutcomes {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl Add for CountedOutcomes {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

/// (precision, recall); each is 0 when its denominator is 0.
pub fn precision_recall(counts: CountedOutcomes) -> (f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(counts.tp, counts.tp + counts.fp), ratio(counts.tp, counts.tp + counts.fn_))
}

pub const DEFAULT_BETA_GRID: [f64; 5] = [0.25, 0.5, 0.75, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FBetaRow {
    pub beta: f64,
    pub fbeta: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FBetaGridReport {
    pub counts: CountedOutcomes,
    pub rows: Vec<FBetaRow>,
}

impl FBetaGridReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned columns, one row per beta.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:>6}  {:>8}  {:>9}  {:>6}\n", "beta", "f_beta", "precision", "recall");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>6.2}  {:>8.4}  {:>9.4}  {:>6.4}",
                row.beta, row.fbeta, row.precision, row.recall
            );
        }
        out
    }
}

pub fn fbeta_grid(counts: CountedOutcomes, grid: &[f64]) -> Result<FBetaGridReport, EvalError> {
    if grid.is_empty() || grid.iter().any(|b| !(*b > 0.0)) {
        return Err(EvalError::BadGrid);
    }
    let (precision, recall) = precision_recall(counts);
    let mut betas = grid.to_vec();
    betas.sort_by(f64::total_cmp);
    let rows = betas
        .into_iter()
        .map(|beta| FBetaRow {
            beta,
            fbeta: f_beta(precision, recall, beta),
            precision,
            recall,
        })
        .collect();
    Ok(FBetaGridReport { counts, rows })
}

/// Nominal Krippendorff's alpha for two raters with no missing values.
///
/// Builds the coincidence matrix (each unit contributes both ordered value
/// pairs), then alpha = 1 − (n − 1) · Σ_{c≠k} o_ck / Σ_{c≠k} n_c · n_k.
pub fn krippendorff_alpha<L: Ord + Clone>(units: &[(L, L)]) -> Result<f64, EvalError> {
    if units.len() < 2 {
        return Err(EvalError::UndefinedAlpha("fewer than 2 units"));
    }
    let values: BTreeSet<&L> = units.iter().flat_map(|(a, b)| [a, b]).collect();
    if values.len() < 2 {
        return Err(EvalError::UndefinedAlpha("fewer than 2 distinct values"));
    }
    let mut marginals: BTreeMap<&L, f64> = BTreeMap::new();
    let mut observed_disagreement = 0.0;
    for (a, b) in units {
        *marginals.entry(a).or_insert(0.0) += 1.0;
        *marginals.entry(b).or_insert(0.0) += 1.0;
        if a != b {
            // o_ab and o_ba, each with weight 1/(m_u − 1) = 1
            observed_disagreement += 2.0;
        }
    }
    let n: f64 = marginals.values().sum();
    let total_sq: f64 = marginals.values().map(|c| c * c).sum();
    let expected_disagreement = n * n - total_sq;
    Ok(1.0 - (n - 1.0) * observed_disagreement / expected_disagreement)
}

fn distribution<K: Ord + Clone>(counts: &BTreeMap<K, usize>) -> Option<BTreeMap<K, f64>> {
    let total: usize = counts.values().sum();
    (total > 0).then(|| {
        counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .collect()
    })
}

/// Total variation distance between two label multisets given as counts.
pub fn label_distribution_distance<K: Ord + Clone>(
    left: &BTreeMap<K, usize>,
    right: &BTreeMap<K, usize>,
) -> Result<f64, EvalError> {
    let p = distribution(left).ok_or(EvalError::EmptyDistribution)?;
    let q = distribution(right).ok_or(EvalError::EmptyDistribution)?;
    let support: BTreeSet<&K> = p.keys().chain(q.keys()).collect();
    let l1: f64 = support
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    Ok(0.5 * l1)
}

/// Counts a multiset given as a sequence of labels.
pub fn count_labels<K, I>(labels: I) -> BTreeMap<K, usize>
where
    K: Ord + Clone + Hash,
    I: IntoIterator<Item = K>,
{
    let mut counts = BTreeMap::new();
    for label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    counts
}
