use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use lazylint::cli::FeatureRecord;
use lazylint_core::corpus::{write_corpus, LabelRegistry, PlanContext, ReviewRecord, SegmentAnnotation, Sentence};
use lazylint_core::detector::{f_beta_counts, FeatureVector, TrainingExample};
use lazylint_core::evalkit::{krippendorff_alpha, CountedOutcomes};
use lazylint_core::splitter::SplitManifest;
use serde_json::Value;

const TARGET: &str = "h3-not-novel";
const F_C: usize = 2;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lazylint"));
    cmd.env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn core_fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn fixture_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/fixture.toml")
        .to_string_lossy()
        .into_owned()
}

fn stdout_json(output: &Output) -> Value {
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    serde_json::from_slice(&output.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Reviews of three sentences; a third of them carry a target segment.
fn corpus(dir: &Path, n: usize) -> PathBuf {
    let keys = ["h3-not-novel", "h5-not-sota", "s2-x-not-clear", "none"];
    let records: Vec<ReviewRecord> = (0..n)
        .map(|i| {
            let sentences = (0..3)
                .map(|j| Sentence {
                    index: j,
                    text: format!("Review {i} sentence {j}."),
                    section: "weaknesses".into(),
                })
                .collect();
            let segments = vec![
                SegmentAnnotation {
                    start: 0,
                    end: 1,
                    labels: BTreeSet::from([keys[i % keys.len()].to_string()]),
                },
                SegmentAnnotation {
                    start: 2,
                    end: 2,
                    labels: BTreeSet::from([keys[(i / 2) % keys.len()].to_string()]),
                },
            ];
            ReviewRecord {
                id: format!("r{i:03}"),
                sections: Default::default(),
                context: PlanContext::default(),
                sentences,
                tags: None,
                segments: Some(segments),
            }
        })
        .collect();
    let path = dir.join("corpus.jsonl");
    let mut file = std::fs::File::create(&path).unwrap();
    write_corpus(&records, &mut file).unwrap();
    file.flush().unwrap();
    path
}

/// Separable features: the target's first question answers yes exactly on
/// target segments.
fn features(dir: &Path, name: &str, reviews: std::ops::Range<usize>) -> PathBuf {
    let registry = LabelRegistry::shipped();
    let signal = registry.index_of(TARGET).unwrap() * F_C;
    let mut lines = String::new();
    for r in reviews {
        for s in 0..4 {
            let positive = (r + s) % 3 == 0;
            let mut values = vec![-1i8; registry.len() * F_C];
            values[signal] = if positive { 1 } else { -1 };
            let noise = (r * 7 + s) % values.len();
            values[noise] = 0;
            let label = if positive { TARGET } else { "none" };
            let record = FeatureRecord {
                review_id: format!("r{r:03}"),
                start: s,
                end: s,
                example: TrainingExample {
                    features: FeatureVector {
                        values,
                        registry_version: registry.version.clone(),
                    },
                    labels: BTreeSet::from([label.to_string()]),
                },
            };
            lines.push_str(&serde_json::to_string(&record).unwrap());
            lines.push('\n');
        }
    }
    let path = dir.join(name);
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["segment"]).status.code(), Some(1));
    assert_eq!(run(&["--set", "no-equals-sign", "config"]).status.code(), Some(1));
    let out = run(&["--set", "server.port=\"x\"", "config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gateway_failure_exits_two_and_names_the_stage() {
    let out = run(&["--config", &fixture_config(), "segment", "--text", "Nothing recorded for this."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("segment stage"));
}

#[test]
fn pipeline_writes_the_golden_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("result.json");
    let detector = core_fixture("detector.json");
    let input = core_fixture("review.json");
    let args = ["--config", &fixture_config(), "pipeline", "--detector", &detector, "--input", &input];
    let stdout = run(&args);
    assert!(stdout.status.success());
    let golden = std::fs::read(core_fixture("golden.json")).unwrap();
    assert_eq!(stdout.stdout, golden);

    let mut with_out = args.to_vec();
    with_out.extend(["--out", p(&out_path)]);
    assert!(run(&with_out).status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), golden.strip_suffix(b"\n").unwrap());
}

#[test]
fn configuration_precedence_on_the_command_line() {
    let port = |cmd: &mut Command| -> i64 {
        let out = cmd.output().unwrap();
        let table: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
        table["server"]["port"].as_integer().unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("lazylint.toml");
    std::fs::write(&file, "[server]\nport = 1111\n").unwrap();
    assert_eq!(port(bin().args(["config"])), 8080);
    assert_eq!(port(bin().args(["--config", p(&file), "config"])), 1111);
    assert_eq!(port(bin().env("LAZYLINT_SERVER__PORT", "2222").args(["--config", p(&file), "config"])), 2222);
    assert_eq!(
        port(bin().env("LAZYLINT_SERVER__PORT", "2222").args(["--config", p(&file), "--set", "server.port=3333", "config"])),
        3333
    );
}

#[test]
fn split_is_deterministic_and_partitions_reviews() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 40);
    let split = |extra: &[&str]| {
        let mut args = vec!["--seed", "3", "split", "--corpus", p(&corpus)];
        args.extend(extra);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let first = split(&["--fractions", "0.9,0.1"]);
    assert_eq!(first, split(&["--fractions", "0.9,0.1"]));
    for text in [first, split(&["--k", "5"]), split(&["--random", "--fractions", "0.5,0.5"])] {
        let manifest: SplitManifest = serde_json::from_str(&text).unwrap();
        let mut ids: Vec<&str> = manifest.parts.iter().flat_map(|p| p.review_ids.iter().map(String::as_str)).collect();
        ids.sort_unstable();
        let expected: Vec<String> = (0..40).map(|i| format!("r{i:03}")).collect();
        assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let bad = run(&["split", "--corpus", p(&corpus), "--fractions", "0.9,0.3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn stats_and_agreement_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 8);
    let stats = stdout_json(&run(&["eval", "stats", "--corpus", p(&corpus)]));
    assert_eq!(stats["reviews"], 8);
    assert_eq!(stats["sentences"], 24);
    assert_eq!(stats["segments"], 16);

    let units = [("a", "a"), ("a", "b"), ("b", "b"), ("c", "c"), ("c", "a")];
    let units_path = dir.path().join("units.json");
    std::fs::write(&units_path, serde_json::to_string(&units).unwrap()).unwrap();
    let report = stdout_json(&run(&["eval", "agreement", "--units", p(&units_path)]));
    assert_eq!(report["units"], 5);
    assert_eq!(report["alpha"].as_f64().unwrap(), krippendorff_alpha(&units).unwrap());
}

#[test]
fn train_eval_and_crossval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = features(dir.path(), "train.jsonl", 0..30);
    let valid = features(dir.path(), "valid.jsonl", 30..40);
    let detector = dir.path().join("detector.json");
    let report = stdout_json(&run(&[
        "--seed",
        "1",
        "train",
        "--train",
        p(&train),
        "--valid",
        p(&valid),
        "--families",
        "decision-tree,knn",
        "--out",
        p(&detector),
    ]));
    assert_eq!(report.as_array().unwrap().len(), 2);
    assert_eq!(report[0]["micro_fbeta"], 1.0);

    let eval = stdout_json(&run(&["eval", "detector", "--detector", p(&detector), "--features", p(&valid), "--betas", "0.5,1"]));
    assert_eq!(eval["family"], "decision-tree");
    assert_eq!(eval["report"]["counts"]["fp"], 0);
    assert_eq!(eval["report"]["counts"]["fn"], 0);
    assert_eq!(eval["report"]["rows"].as_array().unwrap().len(), 2);

    let all = features(dir.path(), "all.jsonl", 0..40);
    let cv = stdout_json(&run(&["crossval", "--features", p(&all), "--k", "5", "--families", "decision-tree"]));
    let folds = cv["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 5);
    let pooled = folds.iter().fold(CountedOutcomes::default(), |acc, f| {
        acc + serde_json::from_value::<CountedOutcomes>(f["counts"].clone()).unwrap()
    });
    assert!((cv["pooled_fbeta"].as_f64().unwrap() - f_beta_counts(pooled, 0.5)).abs() < 1e-12);
    // every segment is tested exactly once
    assert_eq!(pooled.tp + pooled.fp + pooled.fn_ + pooled.tn, 160 * (LabelRegistry::shipped().detectable().count()));
}

#[test]
fn questions_cover_every_label() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 8);
    let questions: Vec<String> = (0..F_C).map(|i| format!("Does the segment raise point {i}?")).collect();
    let fallback = serde_json::to_string(&questions).unwrap();
    let banks = stdout_json(&run(&[
        "--backend",
        "replay",
        "--replay",
        &core_fixture("replay.json"),
        "--replay-fallback",
        &fallback,
        "questions",
        "--corpus",
        p(&corpus),
        "--f-c",
        "2",
    ]));
    let registry = LabelRegistry::shipped();
    let banks = banks.as_object().unwrap();
    assert_eq!(banks.len(), registry.len());
    assert_eq!(banks[TARGET], serde_json::json!(questions));
    // no exemplars: generic questions
    let generic = &banks["h1-not-surprising"];
    assert_eq!(generic.as_array().unwrap().len(), F_C);
    assert_ne!(generic, &serde_json::json!(questions));
}

#[test]
fn serve_answers_health_on_an_ephemeral_port() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(core_fixture("detector.json"), dir.path().join("fixture.json")).unwrap();
    let mut child = bin()
        .args(["--config", &fixture_config(), "serve", "--port", "0", "--detector-dir", p(dir.path())])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("announces its address").to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /v1/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /v1/labels HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut labels = String::new();
    stream.read_to_string(&mut labels).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"{"status":"ok"}"#), "{response}");
    assert!(labels.contains(r#""id":"fixture""#), "{labels}");
}

#[test]
fn featurize_writes_one_record_per_gold_segment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 4);
    let registry = LabelRegistry::shipped();
    let banks: serde_json::Map<String, Value> = registry
        .labels()
        .iter()
        .map(|l| (l.key.clone(), serde_json::json!(["Is it so?", "Is it not so?"])))
        .collect();
    let banks_path = dir.path().join("banks.json");
    std::fs::write(&banks_path, Value::Object(banks).to_string()).unwrap();
    let out_path = dir.path().join("features.jsonl");
    let out = run(&[
        "--backend",
        "replay",
        "--replay",
        &core_fixture("replay.json"),
        "--replay-fallback",
        "Answer: [[Yes]]",
        "featurize",
        "--corpus",
        p(&corpus),
        "--banks",
        p(&banks_path),
        "--out",
        p(&out_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = lazylint::cli::read_features(&out_path).unwrap();
    assert_eq!(records.len(), 8);
    assert_eq!((records[0].review_id.as_str(), records[0].start, records[0].end), ("r000", 0, 1));
    assert_eq!(records[1].example.labels, BTreeSet::from(["h3-not-novel".to_string()]));
    for record in &records {
        assert_eq!(record.example.features.values, vec![1; registry.len() * F_C]);
    }
}

#[test]
fn detect_classifies_recorded_segments() {
    let segment = "The approach is not novel. Similar ideas have been explored before.";
    let out = stdout_json(&run(&[
        "--config",
        &fixture_config(),
        "detect",
        "--detector",
        &core_fixture("detector.json"),
        "--text",
        segment,
    ]));
    assert_eq!(out[0]["text"], segment);
    assert_eq!(out[0]["labels"], serde_json::json!([TARGET]));
}
