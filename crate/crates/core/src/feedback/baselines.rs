//! Simpler feedback strategies sharing the gateway and fitness plumbing.

use serde::{Deserialize, Serialize};

use super::evolve::{clean_feedback, generation_request, run_evolution, EvolutionTrace, FeedbackTask};
use super::fitness::{fitness, FitnessBreakdown};
use super::plan::generate_plan;
use super::{FeedbackError, GaConfig, Stage};
use crate::corpus::LabelRegistry;
use crate::detector::issue_catalog;
use crate::prompts;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackStrategy {
    /// One prompt with the issue catalog, no template.
    ZeroShot,
    /// One prompt adapting the issue's template.
    Templatic,
    /// Plan, then one template-guided completion.
    PlanThenGenerate,
    /// Plan, then the full genetic search.
    #[default]
    Genetic,
}

impl std::str::FromStr for FeedbackStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" => Ok(Self::ZeroShot),
            "templatic" => Ok(Self::Templatic),
            "plan-then-generate" => Ok(Self::PlanThenGenerate),
            "genetic" => Ok(Self::Genetic),
            other => Err(format!("unknown feedback strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub strategy: FeedbackStrategy,
    pub label: String,
    pub text: String,
    pub fitness: FitnessBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<EvolutionTrace>,
}

fn single(task: &FeedbackTask<'_>, prompt: String) -> Result<String, FeedbackError> {
    let response = task
        .gateway
        .complete(&task.profile.request(prompt))
        .map_err(|source| FeedbackError::Gateway {
            stage: Stage::Generate,
            source,
        })?;
    Ok(clean_feedback(&response.content))
}

/// Runs one strategy for one (segment, label) pair. Every strategy's text is
/// scored with the same fitness so results are comparable.
pub fn generate_feedback(
    strategy: FeedbackStrategy,
    task: &FeedbackTask<'_>,
    registry: &LabelRegistry,
    config: &GaConfig,
    seed: u64,
) -> Result<FeedbackOutcome, FeedbackError> {
    let (text, trace) = match strategy {
        FeedbackStrategy::ZeroShot => {
            let catalog = issue_catalog(registry);
            let prompt = prompts::render(
                &task.prompts.feedback_zero_shot,
                &[
                    ("issue_catalog", catalog.as_str()),
                    ("weakness", task.segment),
                    ("issue", task.label.display.as_str()),
                ],
            );
            (single(task, prompt)?, None)
        }
        FeedbackStrategy::Templatic => {
            let prompt = prompts::render(
                &task.prompts.feedback_templatic,
                &[
                    ("weakness", task.segment),
                    ("issue", task.label.display.as_str()),
                    ("template", task.template),
                ],
            );
            (single(task, prompt)?, None)
        }
        FeedbackStrategy::PlanThenGenerate => {
            let plan = generate_plan(task.segment, task.label, task.context, task.gateway, task.prompts, task.profile)?;
            let request = generation_request(task, &plan, "1 of 1");
            let response = task.gateway.complete(&request).map_err(|source| FeedbackError::Gateway {
                stage: Stage::Generate,
                source,
            })?;
            (clean_feedback(&response.content), None)
        }
        FeedbackStrategy::Genetic => {
            let trace = run_evolution(task, config, seed)?;
            (trace.best.text.clone(), Some(trace))
        }
    };
    let fitness = fitness(&text, task.template, config);
    Ok(FeedbackOutcome {
        strategy,
        label: task.label.key.clone(),
        text,
        fitness,
        trace,
    })
}
