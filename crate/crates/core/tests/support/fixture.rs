//! The scripted model behind the shipped replay fixture. Shared by the
//! fixture builder example and the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use lazylint_core::corpus::{LabelRegistry, PlanContext};
use lazylint_core::detector::{
    self, BankMap, Family, FeatureVector, ModelParams, TrainConfig, TrainedDetector, TrainingExample,
};
use lazylint_core::feedback::{GaConfig, TemplateRegistry};
use lazylint_core::gateway::{ChatRequest, Decoding, Gateway, ModelProfile};
use lazylint_core::pipeline::{
    run_pipeline, ModelProfiles, PipelineConfig, PipelineControl, PipelineDeps, PipelineInput, PipelineResult,
};
use lazylint_core::prompts::PromptSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const F_C: usize = 10;
pub const FLAGGED_LABEL: &str = "h3-not-novel";
pub const SEED: u64 = 7;

pub const SENTENCES: [(&str, &str); 5] = [
    ("The submission proposes a retrieval method for open-domain question answering.", "O"),
    ("The approach is not novel.", "B"),
    ("Similar ideas have been explored before.", "I"),
    ("Overall the writing is easy to follow.", "O"),
    ("Table 3 reports no variance across random seeds.", "B"),
];

pub fn review_input() -> PipelineInput {
    PipelineInput {
        id: "fixture-review-1".into(),
        review_text: Some(SENTENCES.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(" ")),
        sections: Default::default(),
        context: PlanContext {
            abstract_text: Some(
                "We present a dense retriever trained with hard negatives that improves open-domain QA accuracy."
                    .into(),
            ),
            reviewer_summary: Some("The submission trains a retriever with mined hard negatives.".into()),
            reviewer_strengths: Some("Strong results on two benchmarks.".into()),
        },
    }
}

pub fn profiles() -> ModelProfiles {
    let decoding = Decoding {
        temperature: 0.0,
        max_tokens: 512,
    };
    ModelProfiles {
        segment: ModelProfile::new("fixture-tagger", decoding),
        features: ModelProfile::new("fixture-qa", decoding),
        feedback: ModelProfile::new("fixture-writer", Decoding { temperature: 0.7, ..decoding }),
    }
}

pub fn pipeline_config() -> PipelineConfig {
    PipelineConfig {
        ga: GaConfig::default(),
        seed: SEED,
        ..PipelineConfig::default()
    }
}

pub fn banks(registry: &LabelRegistry) -> BankMap {
    registry
        .labels()
        .iter()
        .map(|l| {
            let questions = (0..F_C).map(|i| format!("Does the segment show cue {i} of {}?", l.key)).collect();
            (l.key.clone(), questions)
        })
        .collect()
}

/// Answer pattern for one label block: all "yes" (except the last question,
/// which is "other") when the label applies, otherwise all "no".
fn block(values: &mut Vec<i8>, applies: bool) {
    for q in 0..F_C {
        values.push(match (q, applies) {
            (q, _) if q == F_C - 1 => 0,
            (_, true) => 1,
            (_, false) => -1,
        });
    }
}

fn example(registry: &LabelRegistry, positive: Option<&str>, rng: &mut ChaCha8Rng) -> TrainingExample {
    let mut values = Vec::with_capacity(registry.len() * F_C);
    for l in registry.labels() {
        block(&mut values, Some(l.key.as_str()) == positive);
    }
    let flip = rng.gen_range(0..values.len());
    values[flip] = -values[flip];
    let labels: BTreeSet<String> = match positive {
        Some(k) => [k.to_string()].into(),
        None => [registry.none_label().key.clone()].into(),
    };
    TrainingExample {
        features: FeatureVector {
            values,
            registry_version: registry.version.clone(),
        },
        labels,
    }
}

pub fn training_data(registry: &LabelRegistry) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for l in registry.detectable() {
        for _ in 0..3 {
            train.push(example(registry, Some(&l.key), &mut rng));
        }
        valid.push(example(registry, Some(&l.key), &mut rng));
    }
    for _ in 0..20 {
        train.push(example(registry, None, &mut rng));
    }
    for _ in 0..8 {
        valid.push(example(registry, None, &mut rng));
    }
    (train, valid)
}

pub fn train_detector(registry: &LabelRegistry) -> TrainedDetector {
    let (train, valid) = training_data(registry);
    let config = TrainConfig {
        families: vec![Family::ExtraTrees],
        beta: 0.5,
        seed: SEED,
        params: ModelParams {
            n_trees: 15,
            ..ModelParams::default()
        },
    };
    detector::train_detector(&train, &valid, registry, &config)
        .expect("fixture detector trains")
        .with_question_banks(banks(registry))
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |to| &rest[..to]))
}

const INIT: [&str; 10] = [
    "Your comment that the approach is not novel needs support. Please cite the prior work you have in mind.",
    "Hi, the novelty claim is vague. Cheers",
    "Please name the earlier papers that explore similar ideas. Explain how this work differs from them.",
    "Your comment suggests the work lacks novelty. Please identify the specific prior papers. State which claims overlap with them.",
    "Novelty critique unsupported.",
    "Please add references. Say what is not new. Be specific about the overlap with earlier work. Point to the sections concerned.",
    "I think you should cite something.",
    "Your comment needs references. Please list the closest prior work and the overlapping claims.",
    "The review should explain why hard negatives for retrievers are not new, with citations.",
    "Please justify the novelty concern with concrete prior work and explain the overlap.",
];

const PIECES: [&str; 6] = [
    "Please cite the prior work you have in mind.",
    "Identify which claims overlap with earlier papers.",
    "Explain how the contribution differs from them.",
    "Your comment that the approach is not novel needs support.",
    "Point to the specific sections concerned.",
    "State the closest prior work by name.",
];

fn offspring(id: &str) -> String {
    let n: usize = id.bytes().map(usize::from).sum();
    let first = PIECES[n % PIECES.len()];
    let second = PIECES[(n / 3 + 1) % PIECES.len()];
    if first == second {
        first.to_string()
    } else {
        format!("{first} {second}")
    }
}

/// The scripted model: every pipeline prompt gets a fixed answer.
pub fn script(request: &ChatRequest) -> Option<String> {
    let prompt = &request.messages.last()?.content;
    if let Some(sentence) = between(prompt, "Sentence to tag:\n", "\n\nRespond") {
        let tag = SENTENCES.iter().find(|(s, _)| *s == sentence.trim())?.1;
        return Some(format!("Tag: {tag}"));
    }
    if prompt.contains("Yes/No questions") {
        let segment = between(prompt, "Review Segment: ", "\n\nQuestion: ")?;
        let question = between(prompt, "Question: ", "\n\nRespond")?;
        let last = question.contains(&format!("cue {} ", F_C - 1));
        let applies = segment.contains("not novel") && question.ends_with(&format!("of {FLAGGED_LABEL}?"));
        return Some(
            match (last, applies) {
                (true, _) => "[[Other]]",
                (false, true) => "[[Yes]]",
                (false, false) => "[[No]]",
            }
            .into(),
        );
    }
    if prompt.starts_with("You are a planning agent") {
        return Some(
            r#"Here is the plan:
[{"plan": "Use the abstract to name the technique whose novelty is questioned", "explanation": "The abstract states the claimed contribution, which the reviewer must contrast with prior work."}]"#
                .into(),
        );
    }
    if let Some(index) = between(prompt, "\nCandidate: ", " of ") {
        let i: usize = index.trim().parse().ok()?;
        return Some(format!("\"Feedback: {}\"", INIT.get(i.checked_sub(1)?)?));
    }
    if let Some(id) = between(prompt, "\nOffspring: ", "\n") {
        return Some(offspring(id.trim()));
    }
    None
}

pub fn run(gateway: &Gateway, detector: &TrainedDetector) -> PipelineResult {
    let registry = LabelRegistry::shipped();
    let templates = TemplateRegistry::shipped();
    let prompts = PromptSet::default();
    let profiles = profiles();
    let deps = PipelineDeps {
        registry: &registry,
        detector,
        templates: &templates,
        gateway,
        prompts: &prompts,
        profiles: &profiles,
    };
    run_pipeline(&review_input(), deps, &pipeline_config(), &PipelineControl::new()).expect("fixture pipeline runs")
}
