use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendKind, ChatBackend, ChatRequest, GatewayError};

pub const API_KEY_ENV: &str = "LAZYLINT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base · 2^retry.
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << retry.min(16)))
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    timeout: Duration,
    // Built lazily: a blocking client must not be created on an async runtime thread.
    client: OnceLock<Client>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .field("timeout", &self.timeout)
            .finish()
    }
}

enum Failure {
    Transient(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            retry,
            timeout,
            client: OnceLock::new(),
        }
    }

    /// Reads the bearer token from `LAZYLINT_API_KEY`.
    pub fn from_env(base_url: &str, retry: RetryPolicy, timeout: Duration) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), retry, timeout)
    }

    fn client(&self) -> Result<&Client, GatewayError> {
        if let Some(client) = self.client.get() {
            return Ok(client);
        }
        let client = Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(self.client.get_or_init(|| client))
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, Failure> {
        let client = self.client().map_err(Failure::Fatal)?;
        let mut builder = client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Failure::Fatal(GatewayError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {body}"),
            }));
        }
        let payload: Value = response
            .json()
            .map_err(|e| Failure::Fatal(GatewayError::Decode(e.to_string())))?;
        extract_content(&payload).map_err(Failure::Fatal)
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions payload.
pub(crate) fn extract_content(payload: &Value) -> Result<String, GatewayError> {
    payload
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Decode(format!("missing choices[0].message.content in {payload}")))
}

impl ChatBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Network
    }

    fn complete(&self, request: &ChatRequest, _fingerprint: &str) -> Result<String, GatewayError> {
        let attempts = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.attempt(request) {
                Ok(content) => return Ok(content),
                Err(Failure::Fatal(err)) => return Err(err),
                Err(Failure::Transient(message)) => {
                    log::warn!("chat completion attempt {} failed: {message}", attempt + 1);
                    last = message;
                }
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}
