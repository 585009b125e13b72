//! Peer-review quality analysis.
//!
//! The crate splits review text into sentences and argumentative segments,
//! detects lazy-thinking and specificity issues per segment from LLM answers to
//! yes/no feature questions, and evolves guideline-aware feedback for each
//! flagged segment with a small genetic algorithm.
//!
//! All LLM access goes through [`gateway::Gateway`], which can be backed by an
//! OpenAI-compatible HTTP endpoint or by a deterministic replay file.

pub mod corpus;
pub mod detector;
pub mod evalkit;
pub mod feedback;
pub mod gateway;
pub mod pipeline;
pub mod prompts;
pub mod segmenter;
pub mod splitter;

/// Version string written into every persisted artifact.
pub const FORMAT_VERSION: &str = "1";
