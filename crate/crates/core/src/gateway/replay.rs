use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use super::{BackendKind, ChatBackend, ChatRequest, GatewayError};

/// Deterministic backend: fingerprint → scripted content.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
    fallback: Option<String>,
}

impl ReplayBackend {
    pub fn new(responses: HashMap<String, String>, fallback: Option<String>) -> Self {
        Self { responses, fallback }
    }

    /// Reads a replay file: a JSON object mapping fingerprints to content.
    pub fn load(path: impl AsRef<Path>, fallback: Option<String>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let responses: HashMap<String, String> =
            serde_json::from_str(&text).map_err(|e| GatewayError::Decode(format!("{}: {e}", path.display())))?;
        Ok(Self { responses, fallback })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, _request: &ChatRequest, fingerprint: &str) -> Result<String, GatewayError> {
        self.responses
            .get(fingerprint)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::Unscripted {
                fingerprint: fingerprint.to_string(),
            })
    }
}

/// Scripted backend driven by a closure; `None` means "unscripted".
/// Reports itself as a replay backend.
pub struct FnBackend<F> {
    script: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Option<String> + Send + Sync,
{
    pub fn new(script: F) -> Self {
        Self { script }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Option<String> + Send + Sync,
{
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, GatewayError> {
        (self.script)(request).ok_or_else(|| GatewayError::Unscripted {
            fingerprint: fingerprint.to_string(),
        })
    }
}

/// Wraps another backend and remembers every response, so a session can be
/// written out as a replay file.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<BTreeMap<String, String>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn recorded(&self) -> BTreeMap<String, String> {
        self.log.lock().expect("recording lock").clone()
    }

    /// Pretty JSON with sorted keys.
    pub fn to_replay_json(&self) -> String {
        serde_json::to_string_pretty(&self.recorded()).expect("map serializes")
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, GatewayError> {
        let content = self.inner.complete(request, fingerprint)?;
        self.log
            .lock()
            .expect("recording lock")
            .insert(fingerprint.to_string(), content.clone());
        Ok(content)
    }
}
