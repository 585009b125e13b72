//! End-to-end analysis of one review: sentences, segments, detected issues
//! and feedback for every flagged (segment, label) pair.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BioTag, LabelRegistry, PlanContext, ReviewRecord, Sentence};
use crate::detector::{self, DetectorError, TrainedDetector};
use crate::feedback::{
    generate_feedback, FeedbackError, FeedbackStrategy, FeedbackTask, FitnessBreakdown, GaConfig, TemplateRegistry,
};
use crate::gateway::{Gateway, ModelProfile};
use crate::prompts::PromptSet;
use crate::segmenter::{self, sentencize_sections, SegmenterError};

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineStage {
    Sentencize,
    Segment,
    Detect,
    Feedback,
    Done,
}

impl PipelineStage {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Sentencize => "sentencize",
            PipelineStage::Segment => "segment",
            PipelineStage::Detect => "detect",
            PipelineStage::Feedback => "feedback",
            PipelineStage::Done => "done",
        }
    }

    fn from_u8(v: u8) -> Self {
        match v {
            0 => PipelineStage::Sentencize,
            1 => PipelineStage::Segment,
            2 => PipelineStage::Detect,
            3 => PipelineStage::Feedback,
            _ => PipelineStage::Done,
        }
    }
}

impl std::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shared between a running pipeline and whoever supervises it: reports the
/// current stage and lets the supervisor ask it to stop early.
#[derive(Debug, Default)]
pub struct PipelineControl {
    stage: AtomicU8,
    cancelled: AtomicBool,
}

impl PipelineControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage(&self) -> PipelineStage {
        PipelineStage::from_u8(self.stage.load(Ordering::SeqCst))
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::SeqCst)
    }

    fn enter(&self, stage: PipelineStage) -> Result<(), PipelineError> {
        self.stage.store(stage as u8, Ordering::SeqCst);
        self.checkpoint()
    }

    fn checkpoint(&self) -> Result<(), PipelineError> {
        if self.is_cancelled() {
            Err(PipelineError::Cancelled(self.stage()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("review has no text")]
    EmptyReview,
    #[error("segmentation: {0}")]
    Segment(#[from] SegmenterError),
    #[error("detection: {0}")]
    Detect(#[from] DetectorError),
    #[error("feedback for segment {segment}, label {label:?}: {source}")]
    Feedback {
        segment: usize,
        label: String,
        #[source]
        source: FeedbackError,
    },
    #[error("cancelled during {0} stage")]
    Cancelled(PipelineStage),
}

impl PipelineError {
    /// The stage that failed.
    pub fn stage(&self) -> PipelineStage {
        match self {
            PipelineError::EmptyReview => PipelineStage::Sentencize,
            PipelineError::Segment(_) => PipelineStage::Segment,
            PipelineError::Detect(_) => PipelineStage::Detect,
            PipelineError::Feedback { .. } => PipelineStage::Feedback,
            PipelineError::Cancelled(stage) => *stage,
        }
    }

    /// Whether the root cause is the LLM gateway (as opposed to bad input or
    /// configuration).
    pub fn is_gateway(&self) -> bool {
        match self {
            PipelineError::Segment(SegmenterError::Gateway { .. }) => true,
            PipelineError::Detect(DetectorError::Featurize { .. } | DetectorError::Gateway { .. }) => true,
            PipelineError::Feedback {
                source: FeedbackError::Gateway { .. },
                ..
            } => true,
            _ => false,
        }
    }
}

/// One model profile per kind of call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfiles {
    pub segment: ModelProfile,
    pub features: ModelProfile,
    pub feedback: ModelProfile,
}

impl ModelProfiles {
    pub fn uniform(profile: ModelProfile) -> Self {
        Self {
            segment: profile.clone(),
            features: profile.clone(),
            feedback: profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ga: GaConfig,
    pub strategy: FeedbackStrategy,
    pub seed: u64,
    /// Attach full evolution traces to each feedback entry.
    pub include_traces: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            strategy: FeedbackStrategy::Genetic,
            seed: 0,
            include_traces: false,
        }
    }
}

/// The review to analyze. With no `sections`, `review_text` is treated as
/// the weaknesses section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineInput {
    #[serde(default = "default_review_id")]
    pub id: String,
    #[serde(default)]
    pub review_text: Option<String>,
    #[serde(default)]
    pub sections: BTreeMap<String, String>,
    #[serde(default)]
    pub context: PlanContext,
}

fn default_review_id() -> String {
    "review".into()
}

impl PipelineInput {
    pub fn from_text(text: impl Into<String>) -> Self {
        Self {
            id: default_review_id(),
            review_text: Some(text.into()),
            ..Self::default()
        }
    }

    /// Sections in reading order: weaknesses, comments, then the rest by name.
    pub fn ordered_sections(&self) -> Vec<(&str, &str)> {
        let mut sections: Vec<(&str, &str)> = self
            .sections
            .iter()
            .filter(|(_, t)| !t.trim().is_empty())
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        if sections.is_empty() {
            if let Some(text) = self.review_text.as_deref().filter(|t| !t.trim().is_empty()) {
                sections.push(("weaknesses", text));
            }
        }
        let rank = |name: &str| match name {
            "weaknesses" => 0,
            "comments" => 1,
            _ => 2,
        };
        sections.sort_by(|a, b| rank(a.0).cmp(&rank(b.0)).then(a.0.cmp(b.0)));
        sections
    }

    pub fn to_record(&self) -> ReviewRecord {
        let sections = self.ordered_sections();
        ReviewRecord {
            id: self.id.clone(),
            sentences: sentencize_sections(sections.iter().copied()),
            sections: sections.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            context: self.context.clone(),
            tags: None,
            segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub labels: BTreeSet<String>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub segment: usize,
    pub label: String,
    pub text: String,
    pub fitness: FitnessBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<crate::feedback::EvolutionTrace>,
}

/// Issue counts: one per (segment, non-fallback label) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSummary {
    pub total_issues: usize,
    pub flagged_segments: usize,
    /// Every detectable label, including those with a count of 0.
    pub per_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub format_version: String,
    pub review_id: String,
    pub registry_version: String,
    pub detector_family: String,
    pub sentences: Vec<Sentence>,
    pub tags: Vec<BioTag>,
    pub segments: Vec<SegmentResult>,
    pub feedback: Vec<FeedbackEntry>,
    pub summary: IssueSummary,
}

impl PipelineResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Everything the pipeline reads but never changes.
#[derive(Debug, Clone, Copy)]
pub struct PipelineDeps<'a> {
    pub registry: &'a LabelRegistry,
    pub detector: &'a TrainedDetector,
    pub templates: &'a TemplateRegistry,
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub profiles: &'a ModelProfiles,
}

fn pair_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub fn summarize(segments: &[SegmentResult], registry: &LabelRegistry) -> IssueSummary {
    let mut per_label: BTreeMap<String, usize> = registry.detectable().map(|l| (l.key.clone(), 0)).collect();
    let mut flagged = 0;
    for s in segments {
        let issues: Vec<&String> = s.labels.iter().filter(|l| per_label.contains_key(*l)).collect();
        if !issues.is_empty() {
            flagged += 1;
        }
        for l in issues {
            *per_label.get_mut(l).expect("detectable") += 1;
        }
    }
    IssueSummary {
        total_issues: per_label.values().sum(),
        flagged_segments: flagged,
        per_label,
    }
}

/// Runs every stage for one review.
pub fn run_pipeline(
    input: &PipelineInput,
    deps: PipelineDeps<'_>,
    config: &PipelineConfig,
    control: &PipelineControl,
) -> Result<PipelineResult, PipelineError> {
    control.enter(PipelineStage::Sentencize)?;
    let record = input.to_record();
    if record.sentences.is_empty() {
        return Err(PipelineError::EmptyReview);
    }

    control.enter(PipelineStage::Segment)?;
    let tagged = segmenter::tag_bio(&record, deps.gateway, deps.prompts, &deps.profiles.segment)?;

    control.enter(PipelineStage::Detect)?;
    let texts: Vec<&str> = tagged.segments.iter().map(|s| s.text.as_str()).collect();
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        detector::featurize_batch(
            &texts,
            &deps.detector.question_banks,
            deps.registry,
            deps.gateway,
            deps.prompts,
            &deps.profiles.features,
        )?
    };
    let mut segments = Vec::with_capacity(vectors.len());
    for (index, (segment, vector)) in tagged.segments.iter().zip(&vectors).enumerate() {
        let prediction = deps.detector.predict(vector)?;
        segments.push(SegmentResult {
            index,
            start: segment.sentence_range.start,
            end: segment.sentence_range.end,
            text: segment.text.clone(),
            labels: prediction.labels,
            scores: prediction.scores,
        });
    }

    control.enter(PipelineStage::Feedback)?;
    let none = &deps.registry.none_label().key;
    let jobs: Vec<(usize, &str)> = segments
        .iter()
        .flat_map(|s| {
            s.labels
                .iter()
                .filter(|l| *l != none && deps.registry.get(l).is_some_and(|d| d.kind.is_detectable()))
                .map(move |l| (s.index, l.as_str()))
        })
        .collect();
    let feedback: Vec<FeedbackEntry> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(segment, label_key))| {
            control.checkpoint()?;
            let wrap = |source| PipelineError::Feedback {
                segment,
                label: label_key.to_string(),
                source,
            };
            let label = deps.registry.get(label_key).expect("predicted labels are registered");
            let template = deps.templates.resolve(label_key, config.ga.generic_fallback).map_err(wrap)?;
            let task = FeedbackTask {
                segment: &segments[segment].text,
                label,
                context: &record.context,
                template,
                gateway: deps.gateway,
                prompts: deps.prompts,
                profile: &deps.profiles.feedback,
            };
            let outcome = generate_feedback(
                config.strategy,
                &task,
                deps.registry,
                &config.ga,
                pair_seed(config.seed, job),
            )
            .map_err(wrap)?;
            Ok(FeedbackEntry {
                segment,
                label: label_key.to_string(),
                text: outcome.text,
                fitness: outcome.fitness,
                trace: if config.include_traces { outcome.trace } else { None },
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    control.enter(PipelineStage::Done)?;
    let summary = summarize(&segments, deps.registry);
    Ok(PipelineResult {
        format_version: crate::FORMAT_VERSION.into(),
        review_id: record.id,
        registry_version: deps.registry.version.clone(),
        detector_family: deps.detector.family.to_string(),
        sentences: tagged.sentences,
        tags: tagged.tags,
        segments,
        feedback,
        summary,
    })
}
