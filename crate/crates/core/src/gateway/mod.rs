//! Chat-completion access behind one interface.
//!
//! A [`Gateway`] wraps a [`ChatBackend`] (HTTP or replay), an optional
//! on-disk [`ResponseCache`], and a bounded worker pool for batches.

mod cache;
mod http;
mod replay;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV};
pub use replay::{FnBackend, RecordingBackend, ReplayBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unscripted request {fingerprint}")]
    Unscripted { fingerprint: String },
    #[error("cannot decode provider response: {0}")]
    Decode(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

/// Sampling parameters for one kind of call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 512 }
    }
}

/// Model name plus decoding parameters for one kind of call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model: String,
    #[serde(flatten)]
    pub decoding: Decoding,
}

impl ModelProfile {
    pub fn new(model: impl Into<String>, decoding: Decoding) -> Self {
        Self { model: model.into(), decoding }
    }

    pub fn request(&self, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest::prompt(self.model.clone(), prompt, self.decoding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, decoding: Decoding) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: decoding.temperature,
            max_tokens: decoding.max_tokens,
        }
    }

    /// Single user-message request.
    pub fn prompt(model: impl Into<String>, content: impl Into<String>, decoding: Decoding) -> Self {
        Self::new(model, vec![ChatMessage::user(content)], decoding)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest("empty message content".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Network,
    Replay,
    Cache,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Network => "network",
            BackendKind::Replay => "replay",
            BackendKind::Cache => "cache",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub fingerprint: String,
    pub backend: BackendKind,
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut sorted = Map::new();
            for (k, v) in entries {
                sorted.insert(k, canonicalize(v));
            }
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// SHA-256 over the request serialized as JSON with sorted keys.
pub fn fingerprint(request: &ChatRequest) -> String {
    let value = canonicalize(serde_json::to_value(request).expect("request serializes"));
    let bytes = serde_json::to_vec(&value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Something that turns a request into model text.
pub trait ChatBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, GatewayError>;
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    pool: Arc<rayon::ThreadPool>,
    parallelism: usize,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("cache", &self.cache)
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, parallelism: usize) -> Self {
        let parallelism = parallelism.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .thread_name(|i| format!("lazylint-llm-{i}"))
            .build()
            .expect("thread pool");
        Self {
            backend,
            cache: None,
            pool: Arc::new(pool),
            parallelism,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let fingerprint = fingerprint(request);
        if let Some(cache) = &self.cache {
            if let Some(content) = cache.get(&fingerprint) {
                return Ok(ChatResponse {
                    content,
                    fingerprint,
                    backend: BackendKind::Cache,
                });
            }
        }
        let content = self.backend.complete(request, &fingerprint)?;
        if let Some(cache) = &self.cache {
            if let Err(err) = cache.put(&fingerprint, &content) {
                log::warn!("cache write failed for {fingerprint}: {err}");
            }
        }
        Ok(ChatResponse {
            content,
            fingerprint,
            backend: self.backend.kind(),
        })
    }

    /// Completes a batch on the gateway's worker pool; results keep input order.
    pub fn complete_all(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, GatewayError>> {
        if requests.len() <= 1 || self.parallelism == 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        self.pool.install(|| requests.par_iter().map(|r| self.complete(r)).collect())
    }
}
