//! Review-level splits that keep each part's label distribution close to the
//! corpus-wide one.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReviewRecord;
use crate::evalkit::label_distribution_distance;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("nothing to split: corpus is empty")]
    EmptyCorpus,
    #[error("fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("{parts} parts requested but only {reviews} reviews")]
    TooManyParts { parts: usize, reviews: usize },
    #[error("k-fold needs k >= 2, got {0}")]
    BadK(usize),
    #[error("duplicate review id {0:?}")]
    DuplicateId(String),
    #[error("manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// A review reduced to what the splitter needs: its id and segment-level
/// label counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewLabels {
    pub id: String,
    pub counts: BTreeMap<String, usize>,
}

impl ReviewLabels {
    pub fn from_record(record: &ReviewRecord) -> Self {
        Self {
            id: record.id.clone(),
            counts: record.label_counts(),
        }
    }

    fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPart {
    pub name: String,
    pub review_ids: Vec<String>,
}

/// The on-disk result of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format_version: String,
    pub seed: u64,
    pub parts: Vec<SplitPart>,
    /// Distance of each part's label distribution to the whole corpus's.
    pub distances: Vec<f64>,
}

impl SplitManifest {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SplitError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn part(&self, name: &str) -> Option<&SplitPart> {
        self.parts.iter().find(|p| p.name == name)
    }
}

/// Review capacities per part by largest remainder; every part gets at
/// least one review.
fn capacities(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut caps: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = n.saturating_sub(caps.iter().sum());
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        caps[i] += 1;
        missing -= 1;
    }
    while let Some(empty) = caps.iter().position(|&c| c == 0) {
        let donor = (0..caps.len()).max_by_key(|&i| (caps[i], usize::MAX - i)).expect("non-empty");
        caps[donor] -= 1;
        caps[empty] += 1;
    }
    caps
}

fn part_distance(part: &BTreeMap<String, usize>, global: &BTreeMap<String, usize>, reviews_in_part: usize) -> f64 {
    if global.values().all(|&c| c == 0) {
        return if reviews_in_part == 0 { 1.0 } else { 0.0 };
    }
    label_distribution_distance(part, global).unwrap_or(1.0)
}

fn check(reviews: &[ReviewLabels], parts: usize) -> Result<(), SplitError> {
    if reviews.is_empty() {
        return Err(SplitError::EmptyCorpus);
    }
    if parts > reviews.len() {
        return Err(SplitError::TooManyParts {
            parts,
            reviews: reviews.len(),
        });
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = reviews.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(SplitError::DuplicateId(dup.id.clone()));
    }
    Ok(())
}

fn check_fractions(fractions: &[f64]) -> Result<(), SplitError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadFractions(fractions.to_vec()));
    }
    Ok(())
}

/// Every part's distance to the global label distribution; an empty part
/// counts as maximally distant.
pub fn part_distances(reviews: &[ReviewLabels], assignment: &[usize], parts: usize) -> Vec<f64> {
    let mut global = BTreeMap::new();
    let mut counts = vec![BTreeMap::new(); parts];
    let mut sizes = vec![0usize; parts];
    for (review, &part) in reviews.iter().zip(assignment) {
        sizes[part] += 1;
        for (label, &c) in &review.counts {
            *global.entry(label.clone()).or_insert(0) += c;
            *counts[part].entry(label.clone()).or_insert(0) += c;
        }
    }
    (0..parts).map(|p| part_distance(&counts[p], &global, sizes[p])).collect()
}

/// Part index per review, in input order.
fn greedy_assignment(reviews: &[ReviewLabels], caps: &[usize], seed: u64) -> Vec<usize> {
    let parts = caps.len();
    let mut order: Vec<usize> = (0..reviews.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|&i| std::cmp::Reverse(reviews[i].total()));

    let mut global: BTreeMap<String, usize> = BTreeMap::new();
    for r in reviews {
        for (label, &c) in &r.counts {
            *global.entry(label.clone()).or_insert(0) += c;
        }
    }
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); parts];
    let mut sizes = vec![0usize; parts];
    let mut distances = vec![1.0; parts];
    let mut assignment = vec![usize::MAX; reviews.len()];

    for i in order {
        let mut best: Option<((f64, f64, f64), usize, f64)> = None;
        for p in (0..parts).filter(|&p| sizes[p] < caps[p]) {
            let mut trial = counts[p].clone();
            for (label, &c) in &reviews[i].counts {
                *trial.entry(label.clone()).or_insert(0) += c;
            }
            let d = part_distance(&trial, &global, sizes[p] + 1);
            let others = (0..parts).filter(|&q| q != p).map(|q| distances[q]);
            let max = others.clone().fold(d, f64::max);
            let sum = others.sum::<f64>() + d;
            let fill = (sizes[p] + 1) as f64 / caps[p] as f64;
            let key = (max, sum, fill);
            let better = best.as_ref().is_none_or(|(k, _, _)| {
                key.partial_cmp(k).unwrap_or(Ordering::Equal) == Ordering::Less
            });
            if better {
                best = Some((key, p, d));
            }
        }
        let (_, p, d) = best.expect("capacities cover every review");
        for (label, &c) in &reviews[i].counts {
            *counts[p].entry(label.clone()).or_insert(0) += c;
        }
        sizes[p] += 1;
        distances[p] = d;
        assignment[i] = p;
    }
    assignment
}

fn manifest(
    reviews: &[ReviewLabels],
    assignment: &[usize],
    names: Vec<String>,
    seed: u64,
) -> SplitManifest {
    let distances = part_distances(reviews, assignment, names.len());
    let parts = names
        .into_iter()
        .enumerate()
        .map(|(p, name)| SplitPart {
            name,
            review_ids: reviews
                .iter()
                .zip(assignment)
                .filter(|(_, &a)| a == p)
                .map(|(r, _)| r.id.clone())
                .collect(),
        })
        .collect();
    SplitManifest {
        format_version: crate::FORMAT_VERSION.into(),
        seed,
        parts,
        distances,
    }
}

/// Greedy distribution-aware split into parts sized by `fractions` (in
/// reviews). Reviews with more labelled segments are placed first; each goes
/// to the open part that keeps the worst part-to-corpus distance lowest.
pub fn split_reviews(reviews: &[ReviewLabels], fractions: &[f64], seed: u64) -> Result<SplitManifest, SplitError> {
    check_fractions(fractions)?;
    check(reviews, fractions.len())?;
    let caps = capacities(fractions, reviews.len());
    let assignment = greedy_assignment(reviews, &caps, seed);
    let names = (0..fractions.len()).map(|i| format!("part-{i}")).collect();
    Ok(manifest(reviews, &assignment, names, seed))
}

/// `k` equal-capacity folds built with the same greedy objective.
pub fn kfold(reviews: &[ReviewLabels], k: usize, seed: u64) -> Result<SplitManifest, SplitError> {
    if k < 2 {
        return Err(SplitError::BadK(k));
    }
    check(reviews, k)?;
    let caps = capacities(&vec![1.0 / k as f64; k], reviews.len());
    let assignment = greedy_assignment(reviews, &caps, seed);
    let names = (0..k).map(|i| format!("fold-{i}")).collect();
    Ok(manifest(reviews, &assignment, names, seed))
}

/// Baseline: shuffle, then fill parts in order up to the same capacities.
pub fn random_split(reviews: &[ReviewLabels], fractions: &[f64], seed: u64) -> Result<SplitManifest, SplitError> {
    check_fractions(fractions)?;
    check(reviews, fractions.len())?;
    let caps = capacities(fractions, reviews.len());
    let mut order: Vec<usize> = (0..reviews.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; reviews.len()];
    let mut slots = caps.iter().enumerate().flat_map(|(p, &c)| std::iter::repeat_n(p, c));
    for i in order {
        assignment[i] = slots.next().expect("capacities cover every review");
    }
    let names = (0..fractions.len()).map(|i| format!("part-{i}")).collect();
    Ok(manifest(reviews, &assignment, names, seed))
}
