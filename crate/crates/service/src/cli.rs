//! The `lazylint` command line. Every subcommand writes JSON to `--out` or
//! stdout. Exit codes: 0 success, 1 invalid input or configuration, 2 LLM
//! gateway failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use lazylint_core::corpus::{corpus_stats, load_corpus, PlanContext, ReviewRecord};
use lazylint_core::detector::{
    banks_from_list, cross_validate, evaluate_detector, featurize_batch, generate_question_bank, generic_bank,
    load_banks, train_detector, BankOptions, Family, TrainConfig, TrainedDetector, TrainingExample,
};
use lazylint_core::evalkit::{fbeta_grid, krippendorff_alpha, DEFAULT_BETA_GRID};
use lazylint_core::feedback::FeedbackStrategy;
use lazylint_core::pipeline::{run_pipeline, PipelineControl, PipelineInput};
use lazylint_core::segmenter::tag_bio;
use lazylint_core::splitter::{kfold, random_split, split_reviews, ReviewLabels, SplitManifest};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::app::{load_detectors, AppContext, FeedbackJob};
use crate::config::{env_layer, override_layer, resolve, set_key, Config};
use crate::error::AppError;
use crate::server::{serve, ServerState};

#[derive(Debug, Parser)]
#[command(name = "lazylint", version, about = "Review segmentation, issue detection and feedback generation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Configuration override, e.g. `ga.tau=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// `network` or `replay`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true, value_name = "URL")]
    pub base_url: Option<String>,
    /// Replay file; implies `--backend replay`.
    #[arg(long, global = true, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    /// Answer for prompts missing from the replay file.
    #[arg(long, global = true, value_name = "TEXT")]
    pub replay_fallback: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Model for every kind of call.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Label registry JSON.
    #[arg(long, global = true, value_name = "FILE")]
    pub registry: Option<PathBuf>,
    /// Feedback template JSON.
    #[arg(long, global = true, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    /// Directory of prompt overrides (`<name>.txt`).
    #[arg(long, global = true, value_name = "DIR")]
    pub prompts_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ReviewArgs {
    /// Review text (one section).
    #[arg(long)]
    pub text: Option<String>,
    /// JSON review: `{"review_text"}` or `{"sections"}`, optional `id` and `context`.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved configuration as TOML.
    Config,
    /// Tag each sentence B/I/O and assemble segments.
    Segment {
        #[command(flatten)]
        review: ReviewArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a question bank for every registry label.
    Questions {
        /// Annotated corpus (JSON array or JSONL) supplying exemplars.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = lazylint_core::detector::DEFAULT_F_C)]
        f_c: usize,
        #[arg(long, default_value_t = 2)]
        max_retries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer every bank question for every gold segment of a corpus (JSONL out).
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        banks: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all families and keep the best on validation.
    Train {
        #[arg(long, value_name = "FEATURES")]
        train: PathBuf,
        #[arg(long, value_name = "FEATURES")]
        valid: PathBuf,
        /// Comma-separated families; all by default.
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Question banks to embed so the detector can featurize new text.
        #[arg(long)]
        banks: Option<PathBuf>,
        /// Detector file to write.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the validation report; stdout by default.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Review-level k-fold cross-validation over a features file.
    Crossval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label-balanced review-level split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated part fractions.
        #[arg(long, value_delimiter = ',', conflicts_with = "k")]
        fractions: Vec<f64>,
        /// Number of folds instead of fractions.
        #[arg(long)]
        k: Option<usize>,
        /// Uniform random assignment instead of the balanced search.
        #[arg(long, conflicts_with = "k")]
        random: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify free-standing segments.
    Detect {
        #[arg(long)]
        detector: PathBuf,
        /// Segment text. Repeatable.
        #[arg(long, required_unless_present = "input")]
        text: Vec<String>,
        /// JSON array of segment strings.
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate feedback for one segment.
    Feedback {
        #[arg(long)]
        segment: String,
        /// Label key. Repeatable.
        #[arg(long = "label", required = true)]
        labels: Vec<String>,
        #[arg(long)]
        strategy: Option<FeedbackStrategy>,
        /// JSON with optional `abstract`, `summary`, `strengths`.
        #[arg(long, value_name = "FILE")]
        context: Option<PathBuf>,
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment, detect and write feedback for a whole review.
    Pipeline {
        #[arg(long)]
        detector: PathBuf,
        #[command(flatten)]
        review: ReviewArgs,
        #[arg(long)]
        traces: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Offline metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Directory of `*.json` detectors, served under their file stem.
        #[arg(long)]
        detector_dir: Option<PathBuf>,
        #[arg(long)]
        deadline_secs: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Pooled counts and the F-beta grid of a detector on a features file.
    Detector {
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Krippendorff's alpha over a JSON array of `[a, b]` label pairs.
    Agreement {
        #[arg(long)]
        units: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One line of a features file: a gold segment and its answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub review_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(flatten)]
    pub example: TrainingExample,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            match &err {
                AppError::Gateway { stage: Some(stage), .. } => eprintln!("error ({stage} stage): {err}"),
                _ => eprintln!("error: {err}"),
            }
            err.exit_code()
        }
    }
}

fn path_value(path: &Path) -> Value {
    Value::String(path.to_string_lossy().into_owned())
}

/// The override layer: `--set` entries first, then the typed flags.
fn overrides(global: &GlobalArgs, command: &Command) -> Result<Table, AppError> {
    let mut table = override_layer(global.set.iter().map(String::as_str))?;
    let mut set = |key: &str, value: Value| set_key(&mut table, key, value);
    if let Some(backend) = &global.backend {
        set("gateway.backend", Value::String(backend.clone()))?;
    }
    if let Some(url) = &global.base_url {
        set("gateway.base_url", Value::String(url.clone()))?;
    }
    if let Some(path) = &global.replay {
        set("gateway.backend", Value::String("replay".into()))?;
        set("gateway.replay_path", path_value(path))?;
    }
    if let Some(text) = &global.replay_fallback {
        set("gateway.replay_fallback", Value::String(text.clone()))?;
    }
    if let Some(dir) = &global.cache_dir {
        set("gateway.cache_dir", path_value(dir))?;
    }
    if let Some(model) = &global.model {
        for kind in ["segment", "features", "feedback"] {
            set(&format!("models.{kind}.model"), Value::String(model.clone()))?;
        }
    }
    if let Some(seed) = global.seed {
        let seed = i64::try_from(seed).map_err(|_| AppError::Invalid("seed must fit in a signed 64-bit integer".into()))?;
        set("pipeline.seed", Value::Integer(seed))?;
    }
    if let Some(path) = &global.registry {
        set("paths.registry", path_value(path))?;
    }
    if let Some(path) = &global.templates {
        set("paths.templates", path_value(path))?;
    }
    if let Some(dir) = &global.prompts_dir {
        set("paths.prompts_dir", path_value(dir))?;
    }
    if let Command::Serve {
        host,
        port,
        detector_dir,
        deadline_secs,
    } = command
    {
        if let Some(host) = host {
            set("server.host", Value::String(host.clone()))?;
        }
        if let Some(port) = port {
            set("server.port", Value::Integer(i64::from(*port)))?;
        }
        if let Some(dir) = detector_dir {
            set("paths.detector_dir", path_value(dir))?;
        }
        if let Some(secs) = deadline_secs {
            let secs = i64::try_from(*secs).map_err(|_| AppError::Invalid("deadline too large".into()))?;
            set("server.deadline_secs", Value::Integer(secs))?;
        }
    }
    Ok(table)
}

fn resolve_config(cli: &Cli) -> Result<Config, AppError> {
    let env = env_layer(std::env::vars())?;
    let overrides = overrides(&cli.global, &cli.command)?;
    Ok(resolve(cli.global.config.as_deref(), env, overrides)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| AppError::Invalid(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| AppError::Invalid(format!("cannot write to stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))
}

fn review_input(args: &ReviewArgs) -> Result<PipelineInput, AppError> {
    match (&args.text, &args.input) {
        (Some(text), _) => Ok(PipelineInput::from_text(text.clone())),
        (None, Some(path)) => read_json(path),
        (None, None) => Err(AppError::Invalid("either --text or --input is required".into())),
    }
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| AppError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn examples(records: Vec<FeatureRecord>) -> Vec<TrainingExample> {
    records.into_iter().map(|r| r.example).collect()
}

fn train_config(families: &[Family], beta: f64, seed: u64) -> TrainConfig {
    let mut config = TrainConfig {
        beta,
        seed,
        ..TrainConfig::default()
    };
    if !families.is_empty() {
        config.families = families.to_vec();
    }
    config
}

/// Groups feature records into folds by review, using the balanced k-fold
/// split over each review's segment label counts.
pub fn review_folds(records: &[FeatureRecord], k: usize, seed: u64) -> Result<Vec<Vec<TrainingExample>>, AppError> {
    let mut counts: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    for record in records {
        let entry = counts.entry(&record.review_id).or_default();
        for label in &record.example.labels {
            *entry.entry(label.clone()).or_insert(0) += 1;
        }
    }
    let reviews: Vec<ReviewLabels> = counts
        .into_iter()
        .map(|(id, counts)| ReviewLabels { id: id.to_string(), counts })
        .collect();
    let manifest = kfold(&reviews, k, seed).map_err(AppError::invalid)?;
    let fold_of: BTreeMap<&str, usize> = manifest
        .parts
        .iter()
        .enumerate()
        .flat_map(|(i, part)| part.review_ids.iter().map(move |id| (id.as_str(), i)))
        .collect();
    let mut folds = vec![Vec::new(); manifest.parts.len()];
    for record in records {
        folds[fold_of[record.review_id.as_str()]].push(record.example.clone());
    }
    Ok(folds)
}

fn load_corpus_checked(path: &Path) -> Result<Vec<ReviewRecord>, AppError> {
    load_corpus(path).map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), AppError> {
    let config = resolve_config(&cli)?;
    if let Command::Config = cli.command {
        return emit(None, config.to_toml().trim_end());
    }
    // Purely offline commands need no gateway.
    match &cli.command {
        Command::Split {
            corpus,
            fractions,
            k,
            random,
            out,
        } => return split(corpus, fractions, *k, *random, config.pipeline.seed, out.as_deref()),
        Command::Train {
            train,
            valid,
            families,
            beta,
            banks,
            out,
            report,
        } => {
            let ctx_registry = registry_only(&config)?;
            let train = examples(read_features(train)?);
            let valid = examples(read_features(valid)?);
            let config = train_config(families, *beta, config.pipeline.seed);
            let mut detector = train_detector(&train, &valid, &ctx_registry, &config)?;
            if let Some(path) = banks {
                detector = detector.with_question_banks(load_banks(path)?);
            }
            detector.save(out)?;
            return emit(report.as_deref(), &to_json(&detector.validation));
        }
        Command::Crossval {
            features,
            k,
            families,
            beta,
            out,
        } => {
            let registry = registry_only(&config)?;
            let records = read_features(features)?;
            let folds = review_folds(&records, *k, config.pipeline.seed)?;
            let report = cross_validate(&folds, &registry, &train_config(families, *beta, config.pipeline.seed))?;
            return emit(out.as_deref(), &to_json(&report));
        }
        Command::Eval(eval) => return evaluate(eval),
        _ => {}
    }

    let ctx = AppContext::build(config)?;
    match cli.command {
        Command::Segment { review, out } => {
            let record = review_input(&review)?.to_record();
            let tagged = tag_bio(&record, &ctx.gateway, &ctx.prompts, &ctx.config.models.segment)?;
            emit(out.as_deref(), &to_json(&tagged))
        }
        Command::Questions {
            corpus,
            f_c,
            max_retries,
            out,
        } => {
            let corpus = load_corpus_checked(&corpus)?;
            let segments: Vec<_> = corpus.iter().flat_map(ReviewRecord::segments).collect();
            let options = BankOptions { f_c, max_retries };
            let mut banks = Vec::with_capacity(ctx.registry.len());
            for label in ctx.registry.labels() {
                let exemplars: Vec<_> = segments.iter().filter(|s| s.labels.contains(&label.key)).cloned().collect();
                if exemplars.is_empty() {
                    log::warn!("no exemplars for {:?}; using generic questions", label.key);
                    banks.push(generic_bank(label, f_c));
                    continue;
                }
                let (bank, report) =
                    generate_question_bank(label, &exemplars, &ctx.gateway, &ctx.prompts, &ctx.config.models.features, options)?;
                for warning in &report.warnings {
                    log::warn!("{}: {warning}", label.key);
                }
                banks.push(bank);
            }
            emit(out.as_deref(), &to_json(&banks_from_list(banks)))
        }
        Command::Featurize { corpus, banks, out } => {
            let corpus = load_corpus_checked(&corpus)?;
            let banks = load_banks(&banks)?;
            let segments: Vec<_> = corpus.iter().flat_map(ReviewRecord::segments).collect();
            let texts: Vec<&str> = segments.iter().map(|s| s.text.as_str()).collect();
            let vectors = featurize_batch(&texts, &banks, &ctx.registry, &ctx.gateway, &ctx.prompts, &ctx.config.models.features)?;
            let mut lines = String::new();
            for (segment, features) in segments.iter().zip(vectors) {
                let record = FeatureRecord {
                    review_id: segment.review_id.clone(),
                    start: segment.sentence_range.start,
                    end: segment.sentence_range.end,
                    example: TrainingExample {
                        features,
                        labels: segment.labels.clone(),
                    },
                };
                lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
                lines.push('\n');
            }
            emit(out.as_deref(), lines.trim_end())
        }
        Command::Detect {
            detector,
            text,
            input,
            out,
        } => {
            let detector = TrainedDetector::load(&detector)?;
            let texts: Vec<String> = match input {
                Some(path) => read_json(&path)?,
                None => text,
            };
            if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
                return Err(AppError::Invalid("segments must be non-empty".into()));
            }
            let predictions = ctx.detect(&detector, &texts)?;
            emit(out.as_deref(), &to_json(&predictions))
        }
        Command::Feedback {
            segment,
            labels,
            strategy,
            context,
            trace,
            out,
        } => {
            if segment.trim().is_empty() {
                return Err(AppError::Invalid("segment must be non-empty".into()));
            }
            ctx.check_feedback_labels(&labels).map_err(AppError::Invalid)?;
            let context: PlanContext = match context {
                Some(path) => read_json(&path)?,
                None => PlanContext::default(),
            };
            let job = FeedbackJob {
                segment: &segment,
                labels: &labels,
                context: &context,
                strategy: strategy.unwrap_or(ctx.config.pipeline.strategy),
                seed: ctx.config.pipeline.seed,
                ga: &ctx.config.ga,
                include_trace: trace,
            };
            let outcomes = ctx.feedback(&job)?;
            emit(out.as_deref(), &to_json(&outcomes))
        }
        Command::Pipeline {
            detector,
            review,
            traces,
            out,
        } => {
            let detector = TrainedDetector::load(&detector)?;
            let input = review_input(&review)?;
            let mut config = ctx.pipeline_config();
            config.include_traces |= traces;
            let result = run_pipeline(&input, ctx.deps(&detector), &config, &PipelineControl::new())?;
            emit(out.as_deref(), result.to_json().trim_end())
        }
        Command::Serve { .. } => {
            let detectors = match &ctx.config.paths.detector_dir {
                Some(dir) => load_detectors(dir)?,
                None => BTreeMap::new(),
            };
            if detectors.is_empty() {
                log::warn!("no detectors loaded; /v1/detect and /v1/pipeline will answer 404");
            }
            let state = Arc::new(ServerState::new(ctx, detectors));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::Invalid(format!("runtime: {e}")))?;
            runtime
                .block_on(serve(state))
                .map_err(|e| AppError::Invalid(format!("server: {e}")))
        }
        Command::Config | Command::Split { .. } | Command::Train { .. } | Command::Crossval { .. } | Command::Eval(_) => {
            unreachable!("handled above")
        }
    }
}

fn registry_only(config: &Config) -> Result<lazylint_core::corpus::LabelRegistry, AppError> {
    match &config.paths.registry {
        Some(path) => lazylint_core::corpus::load_label_registry(path).map_err(AppError::invalid),
        None => Ok(lazylint_core::corpus::LabelRegistry::shipped()),
    }
}

fn split(corpus: &Path, fractions: &[f64], k: Option<usize>, random: bool, seed: u64, out: Option<&Path>) -> Result<(), AppError> {
    let corpus = load_corpus_checked(corpus)?;
    let reviews: Vec<ReviewLabels> = corpus.iter().map(ReviewLabels::from_record).collect();
    let fractions = if fractions.is_empty() { vec![0.9, 0.1] } else { fractions.to_vec() };
    let manifest: SplitManifest = match (k, random) {
        (Some(k), _) => kfold(&reviews, k, seed),
        (None, true) => random_split(&reviews, &fractions, seed),
        (None, false) => split_reviews(&reviews, &fractions, seed),
    }
    .map_err(AppError::invalid)?;
    emit(out, manifest.to_json().trim_end())
}

#[derive(Debug, Serialize)]
struct DetectorEval {
    family: String,
    report: lazylint_core::evalkit::FBetaGridReport,
    per_label: BTreeMap<String, lazylint_core::evalkit::CountedOutcomes>,
}

#[derive(Debug, Serialize)]
struct AgreementReport {
    units: usize,
    alpha: f64,
}

fn evaluate(command: &EvalCommand) -> Result<(), AppError> {
    match command {
        EvalCommand::Detector {
            detector,
            features,
            betas,
            out,
        } => {
            let detector = TrainedDetector::load(detector)?;
            let examples = examples(read_features(features)?);
            let (pooled, per_label) = evaluate_detector(&detector, &examples)?;
            let grid = if betas.is_empty() { DEFAULT_BETA_GRID.to_vec() } else { betas.clone() };
            let report = fbeta_grid(pooled, &grid).map_err(AppError::invalid)?;
            let eval = DetectorEval {
                family: detector.family.to_string(),
                report,
                per_label,
            };
            emit(out.as_deref(), &to_json(&eval))
        }
        EvalCommand::Agreement { units, out } => {
            let units: Vec<(String, String)> = read_json(units)?;
            let alpha = krippendorff_alpha(&units).map_err(AppError::invalid)?;
            emit(
                out.as_deref(),
                &to_json(&AgreementReport {
                    units: units.len(),
                    alpha,
                }),
            )
        }
        EvalCommand::Stats { corpus, out } => {
            let corpus = load_corpus_checked(corpus)?;
            let stats = corpus_stats(&corpus).map_err(AppError::invalid)?;
            emit(out.as_deref(), &to_json(&stats))
        }
    }
}

