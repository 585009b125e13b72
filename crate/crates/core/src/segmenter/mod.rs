//! Sentence splitting, per-sentence B/I/O tagging and segment assembly.

mod sentencize;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BioTag, ReviewRecord, Segment, SentenceRange, Sentence};
use crate::evalkit::{self, CountedOutcomes};
use crate::gateway::{Gateway, GatewayError, ModelProfile};
use crate::prompts::{self, PromptSet};

pub use sentencize::{sentencize, sentencize_sections, split_sentences};

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("review {0:?} has no sentences")]
    NoSentences(String),
    #[error("tagging sentence {index}: {source}")]
    Gateway {
        index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("predicted {predicted} tags but gold has {gold}")]
    LengthMismatch { predicted: usize, gold: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedReview {
    pub review_id: String,
    pub sentences: Vec<Sentence>,
    pub tags: Vec<BioTag>,
    pub segments: Vec<Segment>,
}

fn tag_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([BIO])\b").expect("valid regex"))
}

/// Takes the last standalone uppercase `B`, `I` or `O` in a model answer.
pub fn parse_tag(response: &str) -> Option<BioTag> {
    tag_token()
        .captures_iter(response)
        .last()
        .map(|caps| match &caps[1] {
            "B" => BioTag::B,
            "I" => BioTag::I,
            _ => BioTag::O,
        })
}

/// Rewrites every `I` that does not follow a `B` or `I` into `B`.
pub fn repair_tags(tags: &[BioTag]) -> Vec<BioTag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut inside = false;
    for &tag in tags {
        let fixed = match tag {
            BioTag::I if !inside => BioTag::B,
            other => other,
        };
        inside = fixed != BioTag::O;
        out.push(fixed);
    }
    out
}

/// Maximal `B I*` runs (after orphan repair) as inclusive ranges.
pub fn assemble_segments(tags: &[BioTag]) -> Vec<SentenceRange> {
    let mut ranges = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in repair_tags(tags).into_iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(start) = open.take() {
                    ranges.push(SentenceRange::new(start, i - 1));
                }
                open = Some(i);
            }
            BioTag::I => {}
            BioTag::O => {
                if let Some(start) = open.take() {
                    ranges.push(SentenceRange::new(start, i - 1));
                }
            }
        }
    }
    if let Some(start) = open {
        ranges.push(SentenceRange::new(start, tags.len() - 1));
    }
    ranges
}

fn review_text(sentences: &[Sentence]) -> String {
    sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// Tags every sentence independently, each prompt carrying the sentence and
/// the full review. Unparseable answers become `O`.
pub fn tag_bio(
    review: &ReviewRecord,
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
) -> Result<TaggedReview, SegmenterError> {
    if review.sentences.is_empty() {
        return Err(SegmenterError::NoSentences(review.id.clone()));
    }
    let full = review_text(&review.sentences);
    let requests: Vec<_> = review
        .sentences
        .iter()
        .map(|s| {
            profile.request(prompts::render(
                &prompts.tag_standalone,
                &[("sentence", s.text.as_str()), ("review", full.as_str())],
            ))
        })
        .collect();
    let mut tags = Vec::with_capacity(requests.len());
    for (index, result) in gateway.complete_all(&requests).into_iter().enumerate() {
        let response = result.map_err(|source| SegmenterError::Gateway { index, source })?;
        let tag = parse_tag(&response.content).unwrap_or_else(|| {
            log::warn!("review {}: sentence {index}: unparseable tag {:?}", review.id, response.content);
            BioTag::O
        });
        tags.push(tag);
    }
    let segments = assemble_segments(&tags)
        .into_iter()
        .map(|range| Segment::from_sentences(&review.id, &review.sentences, range, BTreeSet::new()))
        .collect();
    Ok(TaggedReview {
        review_id: review.id.clone(),
        sentences: review.sentences.clone(),
        tags,
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl Prf {
    fn from_counts(counts: CountedOutcomes) -> Self {
        let (precision, recall) = evalkit::precision_recall(counts);
        Self {
            precision,
            recall,
            f1: evalkit::f_beta(precision, recall, 1.0),
            support: counts.tp + counts.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub per_tag: BTreeMap<String, Prf>,
    pub micro: Prf,
    pub macro_avg: Prf,
}

/// Per-tag precision/recall/F1 plus micro and macro averages.
pub fn evaluate_tags(predicted: &[BioTag], gold: &[BioTag]) -> Result<TagReport, SegmenterError> {
    if predicted.len() != gold.len() {
        return Err(SegmenterError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut per_tag = BTreeMap::new();
    let mut pooled = CountedOutcomes::default();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for tag in [BioTag::B, BioTag::I, BioTag::O] {
        let mut counts = CountedOutcomes::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            match (p == tag, g == tag) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
        pooled = pooled + counts;
        let prf = Prf::from_counts(counts);
        p_sum += prf.precision;
        r_sum += prf.recall;
        f_sum += prf.f1;
        per_tag.insert(tag.to_string(), prf);
    }
    Ok(TagReport {
        per_tag,
        micro: Prf::from_counts(pooled),
        macro_avg: Prf {
            precision: p_sum / 3.0,
            recall: r_sum / 3.0,
            f1: f_sum / 3.0,
            support: gold.len(),
        },
    })
}
