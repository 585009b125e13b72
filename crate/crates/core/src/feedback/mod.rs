//! Guideline-aware feedback for flagged review segments: issue templates, a
//! planning step, and a small genetic algorithm over LLM-written candidates
//! scored by a deterministic fitness function.

mod baselines;
mod evolve;
mod fitness;
mod plan;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use baselines::{generate_feedback, FeedbackOutcome, FeedbackStrategy};
pub use evolve::{
    crossover, init_population, run_evolution, select_parents, selection_probabilities, EvolutionTrace,
    FeedbackCandidate, FeedbackTask, GenerationSnapshot, TieBreak,
};
pub use fitness::{
    count_syllables, fitness, flesch_reading_ease, forbidden_occurrences, sentence_count, template_overlap, tokens,
    FitnessBreakdown, FORBIDDEN_TERMS,
};
pub use plan::{fallback_plan, generate_plan, parse_plan, Plan};
pub use templates::{TemplateRegistry, GENERIC_TEMPLATE_KEY, PLACEHOLDER};

/// Where in the feedback flow a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Template,
    Plan,
    Init,
    Crossover,
    TieBreak,
    Generate,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Template => "template",
            Stage::Plan => "plan",
            Stage::Init => "init",
            Stage::Crossover => "crossover",
            Stage::TieBreak => "tie-break",
            Stage::Generate => "generate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("no template for label {0:?} and generic fallback is disabled")]
    MissingTemplate(String),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("population of {population} is smaller than {wanted} parents")]
    PopulationTooSmall { population: usize, wanted: usize },
    #[error("crossover needs at least 2 parents, got {0}")]
    TooFewParents(usize),
    #[error("{stage} stage: {source}")]
    Gateway {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error("template file: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file is malformed: {0}")]
    Malformed(String),
}

impl FeedbackError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            FeedbackError::Gateway { stage, .. } => Some(*stage),
            FeedbackError::MissingTemplate(_) => Some(Stage::Template),
            _ => None,
        }
    }
}

/// How the length term rewards sentence count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthReward {
    /// `min(n_sent, n_max) / n_max`: grows with length up to the cap.
    #[default]
    AsPrinted,
    /// `(n_max − min(n_sent, n_max) + 1) / n_max`: favours short feedback.
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub n: usize,
    pub n_parents: usize,
    pub tau: f64,
    pub n_generations: usize,
    pub n_max: usize,
    pub ngram_n: usize,
    pub forbidden_terms: Vec<String>,
    pub length_reward: LengthReward,
    /// Use the generic template for labels without their own.
    pub generic_fallback: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            n: 10,
            n_parents: 5,
            tau: 0.1,
            n_generations: 3,
            n_max: 5,
            ngram_n: 2,
            forbidden_terms: FORBIDDEN_TERMS.iter().map(|s| s.to_string()).collect(),
            length_reward: LengthReward::AsPrinted,
            generic_fallback: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        let bad = |m: &str| Err(FeedbackError::InvalidConfig(m.into()));
        if self.n_parents < 2 || self.n < self.n_parents {
            return bad("need n >= n_parents >= 2");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.n_generations < 1 {
            return bad("n_generations must be at least 1");
        }
        if self.n_max < 1 {
            return bad("n_max must be at least 1");
        }
        if self.ngram_n < 1 {
            return bad("ngram_n must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = GaConfig::default();
        c.validate().unwrap();
        assert_eq!((c.n, c.n_parents, c.n_generations, c.n_max, c.ngram_n), (10, 5, 3, 5, 2));
        assert_eq!(c.forbidden_terms.len(), 19);
    }

    #[test]
    fn invalid_configs() {
        for c in [
            GaConfig { n_parents: 1, ..Default::default() },
            GaConfig { n: 4, ..Default::default() },
            GaConfig { tau: 0.0, ..Default::default() },
            GaConfig { n_generations: 0, ..Default::default() },
            GaConfig { n_max: 0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn config_keys_mirror_fields() {
        let c: GaConfig = serde_json::from_str(r#"{"tau": 0.5, "length_reward": "inverted"}"#).unwrap();
        assert_eq!(c.tau, 0.5);
        assert_eq!(c.length_reward, LengthReward::Inverted);
        assert_eq!(c.n, 10);
    }
}
