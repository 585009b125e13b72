//! Reviews, sentences, segments and the issue-label taxonomy.
//!
//! A corpus file is line-delimited JSON. The first line may be a header
//! object `{"format_version":"1"}`; every other non-empty line is one
//! [`ReviewRecord`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::FORMAT_VERSION;

const SHIPPED_REGISTRY: &str = include_str!("../assets/labels.json");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported format_version {0:?}")]
    UnsupportedVersion(String),
    #[error("duplicate review id {0:?}")]
    DuplicateId(String),
    #[error("review {review_id:?}: tag count mismatch ({tags} tags for {sentences} sentences)")]
    TagMismatch {
        review_id: String,
        tags: usize,
        sentences: usize,
    },
    #[error("review {review_id:?}: {message}")]
    InvalidReview { review_id: String, message: String },
    #[error("duplicate label key {0:?}")]
    DuplicateLabel(String),
    #[error("registry must contain exactly one label of kind {0}")]
    MissingFallbackLabel(LabelKind),
    #[error("registry needs at least 3 labels, found {0}")]
    RegistryTooSmall(usize),
    #[error("malformed registry: {0}")]
    MalformedRegistry(String),
    #[error("review {review_id:?}: unknown label {label:?}")]
    UnknownLabel { review_id: String, label: String },
    #[error("review {review_id:?}: label {label:?} cannot be combined with other labels")]
    ExclusiveLabel { review_id: String, label: String },
    #[error("corpus is empty")]
    EmptyCorpus,
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Lazy,
    Specificity,
    None,
    NotEnoughInfo,
}

impl LabelKind {
    /// Lazy-thinking and specificity labels get classifiers; the two
    /// fallback kinds do not.
    pub fn is_detectable(self) -> bool {
        matches!(self, LabelKind::Lazy | LabelKind::Specificity)
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LabelKind::Lazy => "lazy",
            LabelKind::Specificity => "specificity",
            LabelKind::None => "none",
            LabelKind::NotEnoughInfo => "not-enough-info",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueLabel {
    pub key: String,
    pub kind: LabelKind,
    pub display: String,
    pub rationale: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RegistryFile {
    Versioned {
        format_version: String,
        version: String,
        labels: Vec<IssueLabel>,
    },
    Bare(Vec<IssueLabel>),
}

/// Ordered label taxonomy. The order fixes the block order of feature vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    pub version: String,
    labels: Vec<IssueLabel>,
}

impl LabelRegistry {
    pub fn new(version: impl Into<String>, labels: Vec<IssueLabel>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.key.as_str()) {
                return Err(CorpusError::DuplicateLabel(label.key.clone()));
            }
        }
        for kind in [LabelKind::None, LabelKind::NotEnoughInfo] {
            if labels.iter().filter(|l| l.kind == kind).count() != 1 {
                return Err(CorpusError::MissingFallbackLabel(kind));
            }
        }
        if labels.len() < 3 {
            return Err(CorpusError::RegistryTooSmall(labels.len()));
        }
        Ok(Self {
            version: version.into(),
            labels,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, CorpusError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| CorpusError::MalformedRegistry(e.to_string()))?;
        match file {
            RegistryFile::Versioned {
                format_version,
                version,
                labels,
            } => {
                if format_version != FORMAT_VERSION {
                    return Err(CorpusError::UnsupportedVersion(format_version));
                }
                Self::new(version, labels)
            }
            RegistryFile::Bare(labels) => Self::new("unversioned", labels),
        }
    }

    /// The registry bundled with the crate: 16 lazy-thinking heuristics,
    /// 7 specificity issues, `none` and `not-enough-info`.
    pub fn shipped() -> Self {
        Self::from_json_str(SHIPPED_REGISTRY).expect("bundled registry is valid")
    }

    /// Returns a registry with `extra` inserted before the two fallback
    /// labels, under a new version string.
    pub fn extended(&self, version: impl Into<String>, extra: Vec<IssueLabel>) -> Result<Self, CorpusError> {
        let (detectable, fallback): (Vec<_>, Vec<_>) =
            self.labels.iter().cloned().partition(|l| l.kind.is_detectable());
        let mut labels = detectable;
        labels.extend(extra);
        labels.extend(fallback);
        Self::new(version, labels)
    }

    pub fn to_json_string(&self) -> String {
        let value = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "version": self.version,
            "labels": self.labels,
        });
        serde_json::to_string_pretty(&value).expect("registry serializes")
    }

    pub fn labels(&self) -> &[IssueLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&IssueLabel> {
        self.labels.iter().find(|l| l.key == key)
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.key == key)
    }

    pub fn detectable(&self) -> impl Iterator<Item = &IssueLabel> {
        self.labels.iter().filter(|l| l.kind.is_detectable())
    }

    pub fn none_label(&self) -> &IssueLabel {
        self.labels
            .iter()
            .find(|l| l.kind == LabelKind::None)
            .expect("registry invariant: one none label")
    }

    pub fn not_enough_info_label(&self) -> &IssueLabel {
        self.labels
            .iter()
            .find(|l| l.kind == LabelKind::NotEnoughInfo)
            .expect("registry invariant: one not-enough-info label")
    }

    /// Checks a segment's label set: every key is known, and the fallback
    /// labels never co-occur with anything else.
    pub fn check_label_set(&self, review_id: &str, labels: &BTreeSet<String>) -> Result<(), CorpusError> {
        for key in labels {
            let label = self.get(key).ok_or_else(|| CorpusError::UnknownLabel {
                review_id: review_id.to_string(),
                label: key.clone(),
            })?;
            if !label.kind.is_detectable() && labels.len() > 1 {
                return Err(CorpusError::ExclusiveLabel {
                    review_id: review_id.to_string(),
                    label: key.clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn load_label_registry(path: impl AsRef<Path>) -> Result<LabelRegistry, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    LabelRegistry::from_json_str(&text)
}

// ---------------------------------------------------------------------------
// Reviews
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::B => "B",
            BioTag::I => "I",
            BioTag::O => "O",
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub section: String,
}

/// Knowledge the feedback planner may draw on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanContext {
    #[serde(rename = "abstract", default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    #[serde(rename = "summary", default, skip_serializing_if = "Option::is_none")]
    pub reviewer_summary: Option<String>,
    #[serde(rename = "strengths", default, skip_serializing_if = "Option::is_none")]
    pub reviewer_strengths: Option<String>,
}

/// Gold segment annotation as stored in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub id: String,
    #[serde(default)]
    pub sections: BTreeMap<String, String>,
    #[serde(default)]
    pub context: PlanContext,
    pub sentences: Vec<Sentence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<BioTag>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SegmentAnnotation>>,
}

/// Inclusive sentence-ordinal range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRange {
    pub start: usize,
    pub end: usize,
}

impl SentenceRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..=self.end).contains(&index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub review_id: String,
    pub sentence_range: SentenceRange,
    pub text: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

impl Segment {
    /// Builds a segment whose text is the member sentences joined by one space.
    pub fn from_sentences(
        review_id: &str,
        sentences: &[Sentence],
        range: SentenceRange,
        labels: BTreeSet<String>,
    ) -> Self {
        let text = sentences[range.start..=range.end]
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            review_id: review_id.to_string(),
            sentence_range: range,
            text,
            labels,
        }
    }
}

impl ReviewRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::InvalidReview {
            review_id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.sections.keys().any(|k| k.trim().is_empty()) {
            return Err(invalid("empty section name".into()));
        }
        for (position, sentence) in self.sentences.iter().enumerate() {
            if sentence.index != position {
                return Err(invalid(format!(
                    "sentence indices not contiguous: expected {position}, found {}",
                    sentence.index
                )));
            }
            if sentence.text.trim().is_empty() {
                return Err(invalid(format!("sentence {position} is empty")));
            }
            if sentence.section.trim().is_empty() {
                return Err(invalid(format!("sentence {position} has no section")));
            }
        }
        if let Some(tags) = &self.tags {
            if tags.len() != self.sentences.len() {
                return Err(CorpusError::TagMismatch {
                    review_id: self.id.clone(),
                    tags: tags.len(),
                    sentences: self.sentences.len(),
                });
            }
        }
        if let Some(segments) = &self.segments {
            let mut ranges: Vec<_> = segments.iter().map(|s| (s.start, s.end)).collect();
            ranges.sort_unstable();
            for &(start, end) in &ranges {
                if start > end || end >= self.sentences.len() {
                    return Err(invalid(format!("segment [{start},{end}] out of bounds")));
                }
            }
            for pair in ranges.windows(2) {
                if pair[1].0 <= pair[0].1 {
                    return Err(invalid(format!(
                        "segments [{},{}] and [{},{}] overlap",
                        pair[0].0, pair[0].1, pair[1].0, pair[1].1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gold segments with their text reconstructed from the sentences. Falls
    /// back to label-free segments assembled from the tags when the record
    /// carries tags but no segment annotations.
    pub fn segments(&self) -> Vec<Segment> {
        if let Some(annotations) = &self.segments {
            let mut segments: Vec<Segment> = annotations
                .iter()
                .map(|a| {
                    Segment::from_sentences(
                        &self.id,
                        &self.sentences,
                        SentenceRange::new(a.start, a.end),
                        a.labels.clone(),
                    )
                })
                .collect();
            segments.sort_by_key(|s| s.sentence_range);
            return segments;
        }
        match &self.tags {
            Some(tags) => crate::segmenter::assemble_segments(tags)
                .into_iter()
                .map(|range| Segment::from_sentences(&self.id, &self.sentences, range, BTreeSet::new()))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Multiset of segment labels, one count per segment carrying the label.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for segment in self.segments.iter().flatten() {
            for label in &segment.labels {
                *counts.entry(label.clone()).or_insert(0) += 1;
            }
        }
        counts
    }
}

fn is_header(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.contains_key("format_version") && !o.contains_key("id"))
}

pub fn parse_corpus(text: &str) -> Result<Vec<ReviewRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut first = true;
    for (offset, line) in text.lines().enumerate() {
        let line_no = offset + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if std::mem::take(&mut first) && is_header(&value) {
            let version = value["format_version"].as_str().unwrap_or_default();
            if version != FORMAT_VERSION {
                return Err(CorpusError::UnsupportedVersion(version.to_string()));
            }
            continue;
        }
        let record: ReviewRecord = serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate()?;
        if !ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ReviewRecord>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text)
}

/// Writes the header line followed by one record per line.
pub fn write_corpus<W: Write>(records: &[ReviewRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::json!({ "format_version": FORMAT_VERSION }))?;
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Checks every gold label against the registry, including fallback-label
/// exclusivity.
pub fn validate_against_registry(records: &[ReviewRecord], registry: &LabelRegistry) -> Result<(), CorpusError> {
    for record in records {
        for segment in record.segments.iter().flatten() {
            registry.check_label_set(&record.id, &segment.labels)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub reviews: usize,
    pub sentences: usize,
    pub segments: usize,
    /// sentences per segment → number of segments
    pub segment_lengths: BTreeMap<usize, usize>,
    /// labels per segment → number of segments
    pub labels_per_segment: BTreeMap<usize, usize>,
    pub label_frequency: BTreeMap<String, usize>,
}

pub fn corpus_stats(corpus: &[ReviewRecord]) -> Result<StatsReport, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut report = StatsReport {
        reviews: corpus.len(),
        ..StatsReport::default()
    };
    for record in corpus {
        report.sentences += record.sentences.len();
        for segment in record.segments() {
            report.segments += 1;
            *report.segment_lengths.entry(segment.sentence_range.len()).or_insert(0) += 1;
            *report.labels_per_segment.entry(segment.labels.len()).or_insert(0) += 1;
            for label in segment.labels {
                *report.label_frequency.entry(label).or_insert(0) += 1;
            }
        }
    }
    Ok(report)
}
