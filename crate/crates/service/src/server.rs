//! The JSON-over-HTTP service.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lazylint_core::corpus::{IssueLabel, PlanContext};
use lazylint_core::detector::{DetectorError, TrainedDetector};
use lazylint_core::feedback::{FeedbackError, FeedbackOutcome, FeedbackStrategy};
use lazylint_core::pipeline::{run_pipeline, PipelineControl, PipelineError, PipelineInput, PipelineResult, PipelineStage};
use lazylint_core::segmenter::{tag_bio, SegmenterError, TaggedReview};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::app::{AppContext, DetectedSegment, FeedbackJob};

pub struct ServerState {
    pub ctx: AppContext,
    pub detectors: BTreeMap<String, Arc<TrainedDetector>>,
    /// Budget for each LLM-backed request.
    pub deadline: Duration,
}

impl ServerState {
    pub fn new(ctx: AppContext, detectors: BTreeMap<String, Arc<TrainedDetector>>) -> Self {
        let deadline = Duration::from_secs(ctx.config.server.deadline_secs);
        Self {
            ctx,
            detectors,
            deadline,
        }
    }

    fn detector(&self, id: &str) -> Result<Arc<TrainedDetector>, ApiError> {
        self.detectors
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown detector {id:?}")))
    }
}

type Shared = Arc<ServerState>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: message.into(),
                stage: None,
            },
        }
    }

    fn staged(status: StatusCode, stage: PipelineStage, message: impl Into<String>) -> Self {
        let mut err = Self::new(status, message);
        err.body.stage = Some(stage.as_str().to_string());
        err
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(err: PipelineError) -> Self {
        let stage = err.stage();
        let message = err.to_string();
        if err.is_gateway() {
            return Self::staged(StatusCode::BAD_GATEWAY, stage, message);
        }
        let status = match &err {
            PipelineError::EmptyReview | PipelineError::Segment(SegmenterError::NoSentences(_)) => {
                StatusCode::BAD_REQUEST
            }
            PipelineError::Detect(DetectorError::VersionMismatch { .. } | DetectorError::DimensionMismatch { .. }) => {
                StatusCode::CONFLICT
            }
            PipelineError::Cancelled(_) => StatusCode::GATEWAY_TIMEOUT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::staged(status, stage, message)
    }
}

fn feedback_error(err: FeedbackError) -> ApiError {
    match err {
        FeedbackError::Gateway { .. } => ApiError::staged(StatusCode::BAD_GATEWAY, PipelineStage::Feedback, err.to_string()),
        other => ApiError::staged(StatusCode::UNPROCESSABLE_ENTITY, PipelineStage::Feedback, other.to_string()),
    }
}

/// JSON body parsing where any malformed body is a 400.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Runs blocking LLM work under the request deadline. On expiry the control
/// is cancelled and the stage reached so far is reported.
async fn bounded<T, F>(state: &Shared, control: Arc<PipelineControl>, fixed: Option<PipelineStage>, work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let handle = tokio::task::spawn_blocking(work);
    match tokio::time::timeout(state.deadline, handle).await {
        Ok(Ok(result)) => result,
        Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {join}"))),
        Err(_) => {
            control.cancel();
            let stage = fixed.unwrap_or_else(|| control.stage());
            Err(ApiError::staged(
                StatusCode::GATEWAY_TIMEOUT,
                stage,
                format!("deadline of {:?} exceeded", state.deadline),
            ))
        }
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorInfo {
    pub id: String,
    pub family: String,
    pub registry_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub version: String,
    pub labels: Vec<IssueLabel>,
    pub detectors: Vec<DetectorInfo>,
}

async fn labels(State(state): State<Shared>) -> Json<LabelsResponse> {
    Json(LabelsResponse {
        version: state.ctx.registry.version.clone(),
        labels: state.ctx.registry.labels().to_vec(),
        detectors: state
            .detectors
            .iter()
            .map(|(id, d)| DetectorInfo {
                id: id.clone(),
                family: d.family.to_string(),
                registry_version: d.registry_version.clone(),
            })
            .collect(),
    })
}

async fn segment(State(state): State<Shared>, body: Bytes) -> Result<Json<TaggedReview>, ApiError> {
    let input: PipelineInput = parse(&body)?;
    let record = input.to_record();
    if record.sentences.is_empty() {
        return Err(PipelineError::EmptyReview.into());
    }
    let shared = state.clone();
    let tagged = bounded(&state, Arc::default(), Some(PipelineStage::Segment), move || {
        let ctx = &shared.ctx;
        tag_bio(&record, &ctx.gateway, &ctx.prompts, &ctx.config.models.segment).map_err(|e| PipelineError::from(e).into())
    })
    .await?;
    Ok(Json(tagged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub detector_id: String,
    pub segments: Vec<String>,
    /// When given, must equal the detector's registry version.
    #[serde(default)]
    pub registry_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detector_id: String,
    pub family: String,
    pub registry_version: String,
    pub predictions: Vec<DetectedSegment>,
}

fn version_conflict(expected: &str, found: &str) -> ApiError {
    ApiError::staged(
        StatusCode::CONFLICT,
        PipelineStage::Detect,
        format!("registry version mismatch: detector uses {expected:?}, got {found:?}"),
    )
}

async fn detect(State(state): State<Shared>, body: Bytes) -> Result<Json<DetectResponse>, ApiError> {
    let request: DetectRequest = parse(&body)?;
    let detector = state.detector(&request.detector_id)?;
    if let Some(version) = &request.registry_version {
        if *version != detector.registry_version {
            return Err(version_conflict(&detector.registry_version, version));
        }
    }
    if detector.registry_version != state.ctx.registry.version {
        return Err(version_conflict(&detector.registry_version, &state.ctx.registry.version));
    }
    if request.segments.is_empty() || request.segments.iter().any(|s| s.trim().is_empty()) {
        return Err(ApiError::bad_request("segments must be a non-empty list of non-empty strings"));
    }
    let shared = state.clone();
    let response = bounded(&state, Arc::default(), Some(PipelineStage::Detect), move || {
        let predictions = shared.ctx.detect(&detector, &request.segments)?;
        Ok(DetectResponse {
            detector_id: request.detector_id,
            family: detector.family.to_string(),
            registry_version: detector.registry_version.clone(),
            predictions,
        })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub segment: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub context: PlanContext,
    #[serde(default)]
    pub strategy: Option<FeedbackStrategy>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Overrides the configured generic-template fallback.
    #[serde(default)]
    pub generic_fallback: Option<bool>,
    #[serde(default)]
    pub include_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub feedback: Vec<FeedbackOutcome>,
}

async fn feedback(State(state): State<Shared>, body: Bytes) -> Result<Json<FeedbackResponse>, ApiError> {
    let request: FeedbackRequest = parse(&body)?;
    if request.segment.trim().is_empty() {
        return Err(ApiError::bad_request("segment must be non-empty"));
    }
    state.ctx.check_feedback_labels(&request.labels).map_err(ApiError::bad_request)?;
    let mut ga = state.ctx.config.ga.clone();
    if let Some(fallback) = request.generic_fallback {
        ga.generic_fallback = fallback;
    }
    // Missing templates are configuration errors; report them before any LLM call.
    for key in &request.labels {
        state.ctx.templates.resolve(key, ga.generic_fallback).map_err(feedback_error)?;
    }
    let shared = state.clone();
    let feedback = bounded(&state, Arc::default(), Some(PipelineStage::Feedback), move || {
        let ctx = &shared.ctx;
        let job = FeedbackJob {
            segment: &request.segment,
            labels: &request.labels,
            context: &request.context,
            strategy: request.strategy.unwrap_or(ctx.config.pipeline.strategy),
            seed: request.seed.unwrap_or(ctx.config.pipeline.seed),
            ga: &ga,
            include_trace: request.include_trace,
        };
        ctx.feedback(&job).map_err(feedback_error)
    })
    .await?;
    Ok(Json(FeedbackResponse { feedback }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRequest {
    pub detector_id: String,
    #[serde(flatten)]
    pub input: PipelineInput,
    #[serde(default)]
    pub include_traces: Option<bool>,
}

async fn pipeline(State(state): State<Shared>, body: Bytes) -> Result<Json<PipelineResult>, ApiError> {
    let request: PipelineRequest = parse(&body)?;
    let detector = state.detector(&request.detector_id)?;
    let control = Arc::new(PipelineControl::new());
    let shared = state.clone();
    let worker_control = control.clone();
    let result = bounded(&state, control, None, move || {
        let ctx = &shared.ctx;
        let mut config = ctx.pipeline_config();
        if let Some(traces) = request.include_traces {
            config.include_traces = traces;
        }
        run_pipeline(&request.input, ctx.deps(&detector), &config, &worker_control).map_err(ApiError::from)
    })
    .await?;
    Ok(Json(result))
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let values: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    layer.allow_origin(AllowOrigin::list(values))
}

pub fn router(state: Arc<ServerState>) -> Router {
    let cors = cors(&state.ctx.config.server.cors_origins);
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/labels", get(labels))
        .route("/v1/segment", post(segment))
        .route("/v1/detect", post(detect))
        .route("/v1/feedback", post(feedback))
        .route("/v1/pipeline", post(pipeline))
        .layer(cors)
        .with_state(state)
}

/// Binds, announces the address on stdout, and serves until Ctrl-C.
pub async fn serve(state: Arc<ServerState>) -> std::io::Result<()> {
    let server = &state.ctx.config.server;
    let listener = tokio::net::TcpListener::bind((server.host.as_str(), server.port)).await?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    log::info!("serving {} detector(s) on {addr}", state.detectors.len());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
