//! Layered configuration: command-line overrides, then `LAZYLINT_*`
//! environment variables, then a TOML file, then built-in defaults.
//!
//! Every layer is a TOML table merged key by key, so any setting can come from
//! any layer. Environment variables name a key path with `__` between levels:
//! `LAZYLINT_GATEWAY__BASE_URL` sets `gateway.base_url`. Variables without a
//! `__` (such as `LAZYLINT_API_KEY`) are not configuration keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lazylint_core::feedback::{FeedbackStrategy, GaConfig};
use lazylint_core::gateway::{Decoding, ModelProfile};
use lazylint_core::pipeline::ModelProfiles;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "LAZYLINT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("bad override {0:?}: expected key.path=value")]
    BadOverride(String),
    #[error("{origin}: key {key:?} conflicts with a non-table value")]
    Conflict { origin: String, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    /// OpenAI-compatible HTTP endpoint.
    #[default]
    Network,
    /// Fingerprint → answer file; no network.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub backend: BackendChoice,
    pub base_url: String,
    pub replay_path: Option<PathBuf>,
    /// Answer for requests missing from the replay file.
    pub replay_fallback: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            backend: BackendChoice::Network,
            base_url: "http://localhost:8000/v1".into(),
            replay_path: None,
            replay_fallback: None,
            cache_dir: None,
            parallelism: 8,
            max_retries: 3,
            base_delay_ms: 500,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub strategy: FeedbackStrategy,
    pub seed: u64,
    pub include_traces: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            strategy: FeedbackStrategy::Genetic,
            seed: 0,
            include_traces: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Label registry file; the bundled registry when unset.
    pub registry: Option<PathBuf>,
    /// Feedback template file; the bundled templates when unset.
    pub templates: Option<PathBuf>,
    /// Directory of prompt overrides named `{prompt}.txt`.
    pub prompts_dir: Option<PathBuf>,
    /// Directory of detector files served by id (file stem).
    pub detector_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSettings {
    pub host: String,
    pub port: u16,
    /// Per-request budget for LLM-backed endpoints.
    pub deadline_secs: u64,
    /// Allowed browser origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            deadline_secs: 120,
            cors_origins: vec!["*".into()],
        }
    }
}

fn default_models() -> ModelProfiles {
    let exact = Decoding {
        temperature: 0.0,
        max_tokens: 512,
    };
    let model = "gpt-4o-mini";
    ModelProfiles {
        segment: ModelProfile::new(model, exact),
        features: ModelProfile::new(model, Decoding { max_tokens: 16, ..exact }),
        feedback: ModelProfile::new(model, Decoding { temperature: 0.7, ..exact }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewaySettings,
    pub models: ModelProfiles,
    pub ga: GaConfig,
    pub pipeline: PipelineSettings,
    pub paths: PathSettings,
    pub server: ServerSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            gateway: GatewaySettings::default(),
            models: default_models(),
            ga: GaConfig::default(),
            pipeline: PipelineSettings::default(),
            paths: PathSettings::default(),
            server: ServerSettings::default(),
        }
    }
}

impl Config {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ga.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.gateway.backend == BackendChoice::Replay && self.gateway.replay_path.is_none() {
            return Err(ConfigError::Invalid("the replay backend needs gateway.replay_path".into()));
        }
        if self.gateway.parallelism == 0 {
            return Err(ConfigError::Invalid("gateway.parallelism must be positive".into()));
        }
        if self.server.deadline_secs == 0 {
            return Err(ConfigError::Invalid("server.deadline_secs must be positive".into()));
        }
        Ok(())
    }
}

/// A scalar written on the command line or in the environment: TOML syntax
/// when it parses as a value (`8080`, `true`, `["a"]`), a plain string otherwise.
pub fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert_path(table: &mut Table, path: &[&str], value: Value, origin: &str) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut current = table;
    for part in parents {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        current = entry.as_table_mut().ok_or_else(|| ConfigError::Conflict {
            origin: origin.into(),
            key: path.join("."),
        })?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Sets one dotted key in a layer, e.g. `gateway.replay_path`.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(key.into()));
    }
    insert_path(table, &path, value, key)
}

/// Recursively overlays `top` onto `base`; tables merge, anything else replaces.
pub fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// The environment layer built from `(name, value)` pairs.
pub fn env_layer<I>(vars: I) -> Result<Table, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table = Table::new();
    let vars: BTreeMap<String, String> = vars.into_iter().collect();
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        if !rest.contains("__") {
            continue;
        }
        let lower = rest.to_ascii_lowercase();
        let path: Vec<&str> = lower.split("__").collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::BadOverride(name));
        }
        insert_path(&mut table, &path, parse_scalar(&raw), &name)?;
    }
    Ok(table)
}

/// The command-line layer from `key.path=value` strings.
pub fn override_layer<'a, I>(overrides: I) -> Result<Table, ConfigError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut table = Table::new();
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::BadOverride(item.into()))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::BadOverride(item.into()));
        }
        insert_path(&mut table, &path, parse_scalar(raw.trim()), item)?;
    }
    Ok(table)
}

pub fn file_layer(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut table = text.parse::<Table>().map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if let Some(base) = path.parent() {
        anchor_paths(&mut table, base);
    }
    Ok(table)
}

/// Keys holding filesystem paths; relative values in a file are taken
/// relative to that file's directory.
const PATH_KEYS: [(&str, &str); 6] = [
    ("gateway", "replay_path"),
    ("gateway", "cache_dir"),
    ("paths", "registry"),
    ("paths", "templates"),
    ("paths", "prompts_dir"),
    ("paths", "detector_dir"),
];

fn anchor_paths(table: &mut Table, base: &Path) {
    for (section, key) in PATH_KEYS {
        let Some(Value::String(raw)) = table.get_mut(section).and_then(|s| s.get_mut(key)) else {
            continue;
        };
        if Path::new(raw.as_str()).is_relative() {
            *raw = base.join(raw.as_str()).to_string_lossy().into_owned();
        }
    }
}

/// Resolves defaults < file < environment < overrides into a validated config.
pub fn resolve(file: Option<&Path>, env: Table, overrides: Table) -> Result<Config, ConfigError> {
    let mut table = Table::try_from(Config::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut table, file_layer(path)?);
    }
    merge(&mut table, env);
    merge(&mut table, overrides);
    let config: Config = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}
