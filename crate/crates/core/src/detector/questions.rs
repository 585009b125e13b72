//! Question-bank generation from exemplar segments.

use serde::{Deserialize, Serialize};

use super::{is_valid_question, DetectorError, QuestionBank, DEFAULT_F_C};
use crate::corpus::{IssueLabel, Segment};
use crate::gateway::{Gateway, ModelProfile};
use crate::prompts::{self, PromptSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankOptions {
    pub f_c: usize,
    /// Extra attempts after the first when the answer has too few questions.
    pub max_retries: usize,
}

impl Default for BankOptions {
    fn default() -> Self {
        Self {
            f_c: DEFAULT_F_C,
            max_retries: 2,
        }
    }
}

/// What happened while building one bank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankReport {
    pub label: String,
    pub attempts: usize,
    pub truncated: usize,
    pub padded: usize,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Parses a list of question strings out of free model text. Entries that are
/// empty or too long are dropped and counted.
pub fn parse_question_list(text: &str) -> Option<(Vec<String>, usize)> {
    let raw: Vec<String> = prompts::first_json_array(text)?;
    let total = raw.len();
    let kept: Vec<String> = raw
        .into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| is_valid_question(q))
        .collect();
    let dropped = total - kept.len();
    Some((kept, dropped))
}

fn generic_question(label: &IssueLabel) -> String {
    format!("Does the segment exhibit {}?", label.display)
}

fn exemplar_block(exemplars: &[Segment]) -> String {
    exemplars
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks the model for `f_c` yes/no questions characterizing `label`.
///
/// Too many questions are truncated at once. Too few (or an unparseable
/// answer) trigger up to `max_retries` more attempts; after that a partial
/// list is padded with a generic question, and no list at all is an error.
pub fn generate_question_bank(
    label: &IssueLabel,
    exemplars: &[Segment],
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
    options: BankOptions,
) -> Result<(QuestionBank, BankReport), DetectorError> {
    if exemplars.is_empty() {
        return Err(DetectorError::NoExemplars(label.key.clone()));
    }
    let f_c = options.f_c.max(1);
    let n = f_c.to_string();
    let segments = exemplar_block(exemplars);
    let base = prompts::render(
        &prompts.question_bank,
        &[
            ("issue", label.display.as_str()),
            ("problem", label.rationale.as_str()),
            ("segments", segments.as_str()),
            ("n", n.as_str()),
        ],
    );
    let mut report = BankReport {
        label: label.key.clone(),
        ..BankReport::default()
    };
    let mut best: Option<Vec<String>> = None;
    for attempt in 0..=options.max_retries {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}\n\n(Attempt {}: return exactly {f_c} questions as a list of strings.)", attempt + 1)
        };
        report.attempts += 1;
        let response = gateway
            .complete(&profile.request(prompt))
            .map_err(|source| DetectorError::Gateway {
                context: format!("generating questions for {:?}", label.key),
                source,
            })?;
        let Some((questions, dropped)) = parse_question_list(&response.content) else {
            report.warnings.push(format!("attempt {}: no list of strings in answer", attempt + 1));
            continue;
        };
        report.dropped += dropped;
        if questions.len() >= f_c {
            if questions.len() > f_c {
                report.truncated = questions.len() - f_c;
                report.warnings.push(format!("truncated {} extra questions", report.truncated));
            }
            best = Some(questions.into_iter().take(f_c).collect());
            break;
        }
        report
            .warnings
            .push(format!("attempt {}: {} of {f_c} questions", attempt + 1, questions.len()));
        if best.as_ref().is_none_or(|b| questions.len() > b.len()) && !questions.is_empty() {
            best = Some(questions);
        }
    }
    let Some(mut questions) = best else {
        return Err(DetectorError::BankGeneration {
            label: label.key.clone(),
            reason: format!("no usable question list after {} attempts", report.attempts),
        });
    };
    while questions.len() < f_c {
        questions.push(generic_question(label));
        report.padded += 1;
    }
    if report.padded > 0 {
        report.warnings.push(format!("padded {} generic questions", report.padded));
    }
    for w in &report.warnings {
        log::warn!("question bank {}: {w}", label.key);
    }
    let bank = QuestionBank {
        label_key: label.key.clone(),
        questions,
    };
    bank.validate(f_c)?;
    Ok((bank, report))
}

/// A bank of `f_c` generic questions, for labels with no exemplars.
pub fn generic_bank(label: &IssueLabel, f_c: usize) -> QuestionBank {
    QuestionBank {
        label_key: label.key.clone(),
        questions: vec![generic_question(label); f_c],
    }
}
