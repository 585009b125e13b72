//! The planning step: which knowledge to use when adapting a template.

use serde::{Deserialize, Serialize};

use super::{FeedbackError, Stage};
use crate::corpus::{IssueLabel, PlanContext};
use crate::gateway::{Gateway, ModelProfile};
use crate::prompts::{self, PromptSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub plan: String,
    pub explanation: String,
}

pub fn fallback_plan() -> Plan {
    Plan {
        plan: "follow the template closely".into(),
        explanation: "fallback: unparseable planner output".into(),
    }
}

/// First element of the first bracket-balanced JSON array whose entries
/// carry non-empty `plan` and `explanation` strings.
pub fn parse_plan(text: &str) -> Option<Plan> {
    let plans: Vec<Plan> = prompts::first_json_array(text)?;
    plans
        .into_iter()
        .next()
        .map(|p| Plan {
            plan: p.plan.trim().to_string(),
            explanation: p.explanation.trim().to_string(),
        })
        .filter(|p| !p.plan.is_empty() && !p.explanation.is_empty())
}

fn or_missing(field: &Option<String>) -> &str {
    field.as_deref().filter(|s| !s.trim().is_empty()).unwrap_or("Not provided")
}

/// Asks the planner once, retries once on an unparseable answer, then falls
/// back to a fixed plan.
pub fn generate_plan(
    segment: &str,
    label: &IssueLabel,
    context: &PlanContext,
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
) -> Result<Plan, FeedbackError> {
    let base = prompts::render(
        &prompts.planner,
        &[
            ("review", segment),
            ("issue", label.display.as_str()),
            ("abstract", or_missing(&context.abstract_text)),
            ("summary", or_missing(&context.reviewer_summary)),
            ("strengths", or_missing(&context.reviewer_strengths)),
        ],
    );
    for attempt in 0..2 {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}\n\n(Attempt 2: answer with the JSON list only.)")
        };
        let response = gateway
            .complete(&profile.request(prompt))
            .map_err(|source| FeedbackError::Gateway {
                stage: Stage::Plan,
                source,
            })?;
        if let Some(plan) = parse_plan(&response.content) {
            return Ok(plan);
        }
        log::warn!("planner answer for {} unparseable (attempt {})", label.key, attempt + 1);
    }
    Ok(fallback_plan())
}
