//! Prompt-only detection baseline: the model picks issue keys directly.

use std::collections::BTreeMap;

use super::{DetectorError, PredictionResult};
use crate::corpus::LabelRegistry;
use crate::gateway::{Gateway, ModelProfile};
use crate::prompts::{self, PromptSet};

/// One `key: display — rationale` line per detectable label.
pub fn issue_catalog(registry: &LabelRegistry) -> String {
    registry
        .detectable()
        .map(|l| format!("{}: {} — {}", l.key, l.display, l.rationale))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Detectable keys named in the first JSON list of the answer; unknown
/// keys and fallback labels are ignored.
pub fn parse_label_list(response: &str, registry: &LabelRegistry) -> Vec<String> {
    let keys: Vec<String> = prompts::first_json_array(response).unwrap_or_default();
    let mut out: Vec<String> = keys
        .into_iter()
        .map(|k| k.trim().to_string())
        .filter(|k| registry.get(k).is_some_and(|l| l.kind.is_detectable()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Scores are 1 for named labels and 0 otherwise, with thresholds of 0.5.
pub fn detect_zero_shot(
    segment: &str,
    registry: &LabelRegistry,
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
) -> Result<PredictionResult, DetectorError> {
    let catalog = issue_catalog(registry);
    let prompt = prompts::render(
        &prompts.detect_zero_shot,
        &[("issue_catalog", catalog.as_str()), ("segment", segment)],
    );
    let response = gateway
        .complete(&profile.request(prompt))
        .map_err(|source| DetectorError::Gateway {
            context: "zero-shot detection".into(),
            source,
        })?;
    let named = parse_label_list(&response.content, registry);
    let scores: BTreeMap<String, f64> = registry
        .detectable()
        .map(|l| (l.key.clone(), if named.contains(&l.key) { 1.0 } else { 0.0 }))
        .collect();
    let thresholds = scores.keys().map(|k| (k.clone(), 0.5)).collect();
    Ok(PredictionResult::from_scores(
        scores,
        &thresholds,
        &registry.none_label().key,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_only_detectable_known_keys() {
        let registry = LabelRegistry::shipped();
        let got = parse_label_list(
            r#"Answer: ["s2-x-not-clear", "none", "made-up", "h3-not-novel", "s2-x-not-clear"]"#,
            &registry,
        );
        assert_eq!(got, vec!["h3-not-novel", "s2-x-not-clear"]);
        assert!(parse_label_list("nothing", &registry).is_empty());
    }

    #[test]
    fn catalog_lists_detectable_labels_only() {
        let registry = LabelRegistry::shipped();
        let catalog = issue_catalog(&registry);
        assert_eq!(catalog.lines().count(), registry.detectable().count());
        assert!(!catalog.contains("not-enough-info:"));
    }
}
