#[path = "support/scripted.rs"]
mod scripted;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lazylint_core::corpus::{LabelRegistry, Segment, SentenceRange};
use lazylint_core::detector::{
    cross_validate, detect_zero_shot, evaluate_detector, generate_question_bank, train_detector, BankOptions,
    DetectorError, Family, FeatureVector, ModelParams, TrainConfig, TrainedDetector, TrainingExample,
};
use lazylint_core::gateway::{Decoding, ModelProfile};
use lazylint_core::prompts::PromptSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TARGET: &str = "h3-not-novel";
const SIGNAL: usize = 5;
const F_C: usize = 2;

fn profile() -> ModelProfile {
    ModelProfile::new("scripted", Decoding::default())
}

fn exemplar() -> Segment {
    Segment {
        review_id: "r1".into(),
        sentence_range: SentenceRange::new(0, 0),
        text: "The approach is not novel.".into(),
        labels: [TARGET.to_string()].into(),
    }
}

fn question_list(n: usize) -> String {
    let qs: Vec<String> = (0..n).map(|i| format!("Does the segment name prior work {i}?")).collect();
    serde_json::to_string(&qs).unwrap()
}

fn bank_from(answers: Vec<String>) -> Result<(Vec<String>, usize, usize, usize), DetectorError> {
    let registry = LabelRegistry::shipped();
    let label = registry.get(TARGET).unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = calls.clone();
    let gateway = scripted::gateway(move |_| {
        let i = seen.fetch_add(1, Ordering::SeqCst);
        answers.get(i).cloned()
    });
    let (bank, report) = generate_question_bank(
        label,
        &[exemplar()],
        &gateway,
        &PromptSet::default(),
        &profile(),
        BankOptions::default(),
    )?;
    assert_eq!(report.attempts, calls.load(Ordering::SeqCst));
    Ok((bank.questions, report.attempts, report.truncated, report.padded))
}

#[test]
fn well_formed_bank_is_taken_as_is() {
    let (questions, attempts, truncated, padded) = bank_from(vec![question_list(10)]).unwrap();
    assert_eq!(questions.len(), 10);
    assert_eq!((attempts, truncated, padded), (1, 0, 0));
}

#[test]
fn long_bank_is_truncated() {
    let (questions, attempts, truncated, _) = bank_from(vec![question_list(12)]).unwrap();
    assert_eq!(questions.len(), 10);
    assert_eq!(questions[9], "Does the segment name prior work 9?");
    assert_eq!((attempts, truncated), (1, 2));
}

#[test]
fn garbage_then_valid_list_takes_one_retry() {
    let (questions, attempts, _, padded) =
        bank_from(vec!["I cannot help with that.".into(), format!("Sure: {}", question_list(10))]).unwrap();
    assert_eq!(questions.len(), 10);
    assert_eq!((attempts, padded), (2, 0));
}

#[test]
fn short_lists_are_padded_after_retries() {
    let (questions, attempts, _, padded) =
        bank_from(vec![question_list(4), question_list(6), question_list(5)]).unwrap();
    assert_eq!(attempts, 3);
    assert_eq!(padded, 4);
    assert_eq!(questions[6], format!("Does the segment exhibit {}?", display(TARGET)));
}

fn display(key: &str) -> String {
    LabelRegistry::shipped().get(key).unwrap().display.clone()
}

#[test]
fn unparseable_answers_name_the_label() {
    let err = bank_from(vec!["no".into(), "still no".into(), "[1, 2".into()]).unwrap_err();
    match err {
        DetectorError::BankGeneration { label, .. } => assert_eq!(label, TARGET),
        other => panic!("unexpected {other}"),
    }
}

// ----------------------------------------------------------------- training

fn example(registry: &LabelRegistry, rng: &mut ChaCha8Rng) -> TrainingExample {
    let values: Vec<i8> = (0..registry.len() * F_C).map(|_| rng.gen_range(-1i8..=1)).collect();
    let labels: BTreeSet<String> = if values[SIGNAL] == 1 {
        [TARGET.to_string()].into()
    } else {
        [registry.none_label().key.clone()].into()
    };
    TrainingExample {
        features: FeatureVector {
            values,
            registry_version: registry.version.clone(),
        },
        labels,
    }
}

fn corpus(n: usize, seed: u64) -> Vec<TrainingExample> {
    let registry = LabelRegistry::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| example(&registry, &mut rng)).collect()
}

fn config(families: Vec<Family>) -> TrainConfig {
    TrainConfig {
        families,
        beta: 0.5,
        seed: 1,
        params: ModelParams {
            n_trees: 20,
            ..ModelParams::default()
        },
    }
}

/// F0.5 recomputed from scratch over every validation example.
fn exhaustive_f_half(detector: &TrainedDetector, valid: &[TrainingExample]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for ex in valid {
        let predicted = detector.predict(&ex.features).unwrap().labels;
        for label in detector.models.keys() {
            match (predicted.contains(label), ex.labels.contains(label)) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
    }
    let b2 = 0.25;
    (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn_ + fp)
}

#[test]
fn separable_corpus_is_learned_exactly() {
    let data = corpus(160, 4);
    let (train, valid) = data.split_at(100);
    let registry = LabelRegistry::shipped();
    let detector = train_detector(train, valid, &registry, &config(Family::ALL.to_vec())).unwrap();
    assert_eq!(detector.validation.len(), Family::ALL.len());
    assert_eq!(exhaustive_f_half(&detector, valid), 1.0);
    let best = detector.validation.iter().find(|r| r.family == detector.family).unwrap();
    assert_eq!(best.micro_fbeta, 1.0);
    assert!(detector.thresholds.values().all(|t| (0.0..=1.0).contains(t)));
    assert_eq!(detector.models.len(), registry.detectable().count());
}

#[test]
fn reported_micro_fbeta_matches_pooled_counts() {
    let data = corpus(120, 9);
    let (train, valid) = data.split_at(80);
    let registry = LabelRegistry::shipped();
    let detector = train_detector(train, valid, &registry, &config(vec![Family::Knn])).unwrap();
    let (pooled, _) = evaluate_detector(&detector, valid).unwrap();
    let reported = detector.validation[0].micro_fbeta;
    assert_eq!(reported, lazylint_core::detector::f_beta_counts(pooled, 0.5));
    assert_eq!(reported, exhaustive_f_half(&detector, valid));
}

#[test]
fn family_ties_go_to_the_first_listed() {
    let data = corpus(160, 4);
    let (train, valid) = data.split_at(100);
    let registry = LabelRegistry::shipped();
    for families in [
        vec![Family::DecisionTree, Family::RandomForest],
        vec![Family::RandomForest, Family::DecisionTree],
    ] {
        let detector = train_detector(train, valid, &registry, &config(families.clone())).unwrap();
        assert_eq!(detector.validation[0].micro_fbeta, detector.validation[1].micro_fbeta);
        assert_eq!(detector.family, families[0]);
    }
}

#[test]
fn labels_without_positives_never_fire() {
    let data = corpus(100, 2);
    let (train, valid) = data.split_at(70);
    let registry = LabelRegistry::shipped();
    let detector = train_detector(train, valid, &registry, &config(vec![Family::ExtraTrees])).unwrap();
    let report = &detector.validation[0].per_label["h1-not-surprising"];
    assert!(!report.trained);
    assert_eq!(report.fbeta, 0.0);
    for ex in &data {
        let p = detector.predict(&ex.features).unwrap();
        assert_eq!(p.scores["h1-not-surprising"], 0.0);
        assert!(!p.labels.contains("h1-not-surprising"));
        assert!(p.labels.contains(TARGET) || p.is_none("none"));
    }
}

#[test]
fn training_errors() {
    let registry = LabelRegistry::shipped();
    let data = corpus(40, 1);
    assert!(matches!(
        train_detector(&data, &data, &registry, &config(vec![])),
        Err(DetectorError::NoFamilies)
    ));
    let negatives: Vec<TrainingExample> = data
        .iter()
        .cloned()
        .map(|mut e| {
            e.labels = ["none".to_string()].into();
            e
        })
        .collect();
    assert!(matches!(
        train_detector(&negatives, &negatives, &registry, &config(vec![Family::Knn])),
        Err(DetectorError::NoTrainableLabel)
    ));
    let mut short = data.clone();
    short[3].features.values.pop();
    assert!(matches!(
        train_detector(&short, &data, &registry, &config(vec![Family::Knn])),
        Err(DetectorError::DimensionMismatch { .. })
    ));
}

#[test]
fn persisted_detector_predicts_identically() {
    let data = corpus(120, 6);
    let (train, valid) = data.split_at(80);
    let registry = LabelRegistry::shipped();
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let detector = train_detector(train, valid, &registry, &config(vec![family])).unwrap();
        let path = dir.path().join(format!("{family}.json"));
        detector.save(&path).unwrap();
        let loaded = TrainedDetector::load(&path).unwrap();
        assert_eq!(loaded, detector);
        for ex in &data {
            assert_eq!(loaded.predict(&ex.features).unwrap(), detector.predict(&ex.features).unwrap());
        }
    }
}

#[test]
fn prediction_checks_registry_version_and_length() {
    let data = corpus(80, 3);
    let (train, valid) = data.split_at(50);
    let registry = LabelRegistry::shipped();
    let detector = train_detector(train, valid, &registry, &config(vec![Family::LogRegL2])).unwrap();
    let mut other = data[0].features.clone();
    other.registry_version = "elsewhere".into();
    assert!(matches!(detector.predict(&other), Err(DetectorError::VersionMismatch { .. })));
    let mut short = data[0].features.clone();
    short.values.truncate(3);
    assert!(matches!(detector.predict(&short), Err(DetectorError::DimensionMismatch { .. })));
}

#[test]
fn cross_validation_pools_fold_counts() {
    let data = corpus(150, 8);
    let folds: Vec<Vec<TrainingExample>> = data.chunks(30).map(<[_]>::to_vec).collect();
    let registry = LabelRegistry::shipped();
    let cfg = config(vec![Family::DecisionTree, Family::Knn]);
    let report = cross_validate(&folds, &registry, &cfg).unwrap();
    assert_eq!(report.folds.len(), 5);
    let pooled = report
        .folds
        .iter()
        .fold(lazylint_core::evalkit::CountedOutcomes::default(), |acc, f| acc + f.counts);
    assert_eq!(report.pooled_fbeta, lazylint_core::detector::f_beta_counts(pooled, 0.5));
    let mean = report.folds.iter().map(|f| f.test_fbeta).sum::<f64>() / 5.0;
    assert!((report.mean_fbeta - mean).abs() < 1e-12);
    assert!(matches!(
        cross_validate(&folds[..2], &registry, &cfg),
        Err(DetectorError::TooFewFolds(2))
    ));
}

// ---------------------------------------------------------------- zero-shot

#[test]
fn zero_shot_keeps_detectable_keys_only() {
    let registry = LabelRegistry::shipped();
    let gateway = scripted::gateway(|r| {
        let p = scripted::prompt(r);
        assert!(p.contains("h3-not-novel: "));
        Some(if p.contains("Review Segment: The approach is not novel.") {
            r#"["h3-not-novel", "bogus", "none", "h3-not-novel"]"#.to_string()
        } else {
            "Nothing applies.".to_string()
        })
    });
    let prompts = PromptSet::default();
    let hit = detect_zero_shot("The approach is not novel.", &registry, &gateway, &prompts, &profile()).unwrap();
    assert_eq!(hit.labels, [TARGET.to_string()].into());
    assert_eq!(hit.scores[TARGET], 1.0);
    let miss = detect_zero_shot("The tables are clear.", &registry, &gateway, &prompts, &profile()).unwrap();
    assert!(miss.is_none("none"));
}
