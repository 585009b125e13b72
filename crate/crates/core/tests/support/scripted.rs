//! Helpers for driving the library with scripted model answers.
#![allow(dead_code)]

use std::sync::Arc;

use lazylint_core::gateway::{ChatRequest, FnBackend, Gateway};

pub fn gateway<F>(script: F) -> Gateway
where
    F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
{
    Gateway::new(Arc::new(FnBackend::new(script)), 4)
}

pub fn prompt(request: &ChatRequest) -> &str {
    &request.messages.last().expect("one message").content
}

/// Text between `start` and the next `end` (or the end of `text`).
pub fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |to| &rest[..to]))
}

pub const PLAN_ANSWER: &str =
    r#"[{"plan": "Quote the abstract", "explanation": "It names the contribution being judged."}]"#;

/// A model for the feedback stages: a fixed plan, `init[k]` for candidate
/// `k+1`, and `offspring(id)` for crossover requests.
pub fn ga_script<F>(init: Vec<String>, offspring: F) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync
where
    F: Fn(&str) -> String + Send + Sync,
{
    move |request| {
        let p = prompt(request);
        if p.starts_with("You are a planning agent") {
            return Some(PLAN_ANSWER.to_string());
        }
        if let Some(k) = between(p, "\nCandidate: ", " of ") {
            let k: usize = k.trim().parse().ok()?;
            return init.get(k - 1).cloned();
        }
        between(p, "\nOffspring: ", "\n").map(|id| offspring(id.trim()))
    }
}
