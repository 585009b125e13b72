//! Long-lived objects built once from a resolved [`Config`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use lazylint_core::corpus::{load_label_registry, LabelRegistry, PlanContext};
use lazylint_core::detector::{featurize_batch, TrainedDetector};
use lazylint_core::feedback::{
    generate_feedback, FeedbackError, FeedbackOutcome, FeedbackStrategy, FeedbackTask, GaConfig, TemplateRegistry,
};
use lazylint_core::gateway::{Gateway, HttpBackend, ReplayBackend, ResponseCache, RetryPolicy};
use lazylint_core::pipeline::{PipelineConfig, PipelineDeps, PipelineError};
use lazylint_core::prompts::PromptSet;

use serde::{Deserialize, Serialize};

use crate::config::{BackendChoice, Config};
use crate::error::AppError;

/// Detector output for one free-standing segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedSegment {
    pub text: String,
    pub labels: BTreeSet<String>,
    pub scores: BTreeMap<String, f64>,
    pub decisions: BTreeMap<String, bool>,
}

/// Feedback for one segment under one or more labels.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackJob<'a> {
    pub segment: &'a str,
    pub labels: &'a [String],
    pub context: &'a PlanContext,
    pub strategy: FeedbackStrategy,
    pub seed: u64,
    pub ga: &'a GaConfig,
    pub include_trace: bool,
}

pub struct AppContext {
    pub config: Config,
    pub registry: LabelRegistry,
    pub templates: TemplateRegistry,
    pub prompts: PromptSet,
    pub gateway: Gateway,
}

impl AppContext {
    pub fn build(config: Config) -> Result<Self, AppError> {
        let registry = match &config.paths.registry {
            Some(path) => load_label_registry(path).map_err(AppError::invalid)?,
            None => LabelRegistry::shipped(),
        };
        let templates = match &config.paths.templates {
            Some(path) => TemplateRegistry::load(path).map_err(AppError::invalid)?,
            None => TemplateRegistry::shipped(),
        };
        let prompts = match &config.paths.prompts_dir {
            Some(dir) => PromptSet::with_overrides(dir)
                .map_err(|e| AppError::Invalid(format!("prompt overrides in {}: {e}", dir.display())))?,
            None => PromptSet::default(),
        };
        let gateway = build_gateway(&config)?;
        Ok(Self {
            config,
            registry,
            templates,
            prompts,
            gateway,
        })
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            ga: self.config.ga.clone(),
            strategy: self.config.pipeline.strategy,
            seed: self.config.pipeline.seed,
            include_traces: self.config.pipeline.include_traces,
        }
    }

    pub fn deps<'a>(&'a self, detector: &'a TrainedDetector) -> PipelineDeps<'a> {
        PipelineDeps {
            registry: &self.registry,
            detector,
            templates: &self.templates,
            gateway: &self.gateway,
            prompts: &self.prompts,
            profiles: &self.config.models,
        }
    }

    /// Featurizes and classifies each text with `detector`.
    pub fn detect(&self, detector: &TrainedDetector, texts: &[String]) -> Result<Vec<DetectedSegment>, PipelineError> {
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vectors = featurize_batch(
            &refs,
            &detector.question_banks,
            &self.registry,
            &self.gateway,
            &self.prompts,
            &self.config.models.features,
        )?;
        texts
            .iter()
            .zip(&vectors)
            .map(|(text, vector)| {
                let p = detector.predict(vector)?;
                Ok(DetectedSegment {
                    text: text.clone(),
                    labels: p.labels,
                    scores: p.scores,
                    decisions: p.decisions,
                })
            })
            .collect()
    }

    /// Checks that every key names a detectable label of the registry.
    pub fn check_feedback_labels(&self, labels: &[String]) -> Result<(), String> {
        if labels.is_empty() {
            return Err("at least one label is required".into());
        }
        for key in labels {
            match self.registry.get(key) {
                Some(label) if label.kind.is_detectable() => {}
                Some(_) => return Err(format!("label {key:?} is a fallback label")),
                None => return Err(format!("unknown label {key:?}")),
            }
        }
        Ok(())
    }

    /// Resolves every template up front, then runs the strategy per label.
    pub fn feedback(&self, job: &FeedbackJob<'_>) -> Result<Vec<FeedbackOutcome>, FeedbackError> {
        let templates = job
            .labels
            .iter()
            .map(|key| self.templates.resolve(key, job.ga.generic_fallback))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(job.labels.len());
        for (key, template) in job.labels.iter().zip(templates) {
            let label = self
                .registry
                .get(key)
                .ok_or_else(|| FeedbackError::Malformed(format!("unknown label {key:?}")))?;
            let task = FeedbackTask {
                segment: job.segment,
                label,
                context: job.context,
                template,
                gateway: &self.gateway,
                prompts: &self.prompts,
                profile: &self.config.models.feedback,
            };
            let mut outcome = generate_feedback(job.strategy, &task, &self.registry, job.ga, job.seed)?;
            if !job.include_trace {
                outcome.trace = None;
            }
            out.push(outcome);
        }
        Ok(out)
    }
}

pub fn build_gateway(config: &Config) -> Result<Gateway, AppError> {
    let g = &config.gateway;
    let gateway = match g.backend {
        BackendChoice::Network => {
            let retry = RetryPolicy {
                max_retries: g.max_retries,
                base_delay_ms: g.base_delay_ms,
            };
            let backend = HttpBackend::from_env(&g.base_url, retry, Duration::from_secs(g.timeout_secs));
            Gateway::new(Arc::new(backend), g.parallelism)
        }
        BackendChoice::Replay => {
            let path = g
                .replay_path
                .as_ref()
                .ok_or_else(|| AppError::Invalid("the replay backend needs gateway.replay_path".into()))?;
            let backend = ReplayBackend::load(path, g.replay_fallback.clone()).map_err(AppError::invalid)?;
            Gateway::new(Arc::new(backend), g.parallelism)
        }
    };
    Ok(match &g.cache_dir {
        Some(dir) => gateway.with_cache(ResponseCache::new(dir).map_err(AppError::invalid)?),
        None => gateway,
    })
}

/// Every `*.json` detector in `dir`, keyed by file stem.
pub fn load_detectors(dir: &Path) -> Result<BTreeMap<String, Arc<TrainedDetector>>, AppError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| AppError::Invalid(format!("cannot list detectors in {}: {e}", dir.display())))?;
    let mut detectors = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| AppError::Invalid(format!("cannot list detectors in {}: {e}", dir.display())))?
            .path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let detector = TrainedDetector::load(&path).map_err(AppError::invalid)?;
        log::info!("loaded detector {id:?} ({}, registry {})", detector.family, detector.registry_version);
        detectors.insert(id.to_string(), Arc::new(detector));
    }
    Ok(detectors)
}
