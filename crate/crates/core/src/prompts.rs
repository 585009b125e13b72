//! Prompt templates with `{{name}}` placeholders.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::de::DeserializeOwned;

/// Every prompt the pipeline sends. Defaults are bundled; any of them can be
/// overridden from a directory holding files with the same names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub tag_standalone: String,
    pub question_bank: String,
    pub feature_qa: String,
    pub planner: String,
    pub feedback_plan: String,
    pub crossover: String,
    pub feedback_templatic: String,
    pub feedback_zero_shot: String,
    pub detect_zero_shot: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            tag_standalone: include_str!("../assets/prompts/tag_standalone.txt").into(),
            question_bank: include_str!("../assets/prompts/question_bank.txt").into(),
            feature_qa: include_str!("../assets/prompts/feature_qa.txt").into(),
            planner: include_str!("../assets/prompts/planner.txt").into(),
            feedback_plan: include_str!("../assets/prompts/feedback_plan.txt").into(),
            crossover: include_str!("../assets/prompts/crossover.txt").into(),
            feedback_templatic: include_str!("../assets/prompts/feedback_templatic.txt").into(),
            feedback_zero_shot: include_str!("../assets/prompts/feedback_zero_shot.txt").into(),
            detect_zero_shot: include_str!("../assets/prompts/detect_zero_shot.txt").into(),
        }
    }
}

impl PromptSet {
    /// Defaults, with `{dir}/{name}.txt` replacing each prompt that exists.
    pub fn with_overrides(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        let slots: [(&str, &mut String); 9] = [
            ("tag_standalone", &mut set.tag_standalone),
            ("question_bank", &mut set.question_bank),
            ("feature_qa", &mut set.feature_qa),
            ("planner", &mut set.planner),
            ("feedback_plan", &mut set.feedback_plan),
            ("crossover", &mut set.crossover),
            ("feedback_templatic", &mut set.feedback_templatic),
            ("feedback_zero_shot", &mut set.feedback_zero_shot),
            ("detect_zero_shot", &mut set.detect_zero_shot),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").expect("valid regex"))
}

/// Substitutes `{{name}}` placeholders in one pass; substituted values are
/// never re-scanned. Unknown placeholders are left as written.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    placeholder()
        .replace_all(template, |caps: &Captures| {
            let name = &caps[1];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned()
}

/// Bracket-balanced `[...]` spans in order of their opening bracket, skipping
/// brackets inside JSON strings.
fn bracket_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for start in (0..bytes.len()).filter(|&i| bytes[i] == b'[') {
        let (mut depth, mut in_string, mut escaped) = (0usize, false, false);
        for (offset, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push(&text[start..=start + offset]);
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

/// The first bracket-balanced JSON array in free model text that parses as `T`.
pub fn first_json_array<T: DeserializeOwned>(text: &str) -> Option<T> {
    bracket_spans(text)
        .into_iter()
        .find_map(|span| serde_json::from_str(span).ok())
}
