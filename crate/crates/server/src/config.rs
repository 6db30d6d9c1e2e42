//! Service configuration: one TOML file plus `COACHLAB_*` environment
//! overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use coachlab_core::gateway::{DEFAULT_CHAT_MODEL, DEFAULT_EMBEDDING_MODEL};
use coachlab_core::persona::{PersonaError, PersonaSet};
use coachlab_core::session::{DEFAULT_SESSION_LIMIT_MS, DEFAULT_TASK};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing credential `{0}` (set it in the config file, via the environment, or run with the offline stub)")]
    MissingCredential(&'static str),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Personas(#[from] PersonaError),
    #[error("session storage: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embedding_model: String,
    pub chat_timeout_secs: u64,
    pub chat_retries: u32,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            chat_model: DEFAULT_CHAT_MODEL.into(),
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            chat_timeout_secs: 60,
            chat_retries: 2,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Session event logs live here. In-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub session_limit_ms: i64,
    pub grace_ms: i64,
    pub treatment_probability: f64,
    pub task_statement: String,
    /// Persona overrides file; built-in defaults when unset.
    pub personas: Option<PathBuf>,
    pub provider: ProviderConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: None,
            session_limit_ms: DEFAULT_SESSION_LIMIT_MS,
            grace_ms: 0,
            treatment_probability: 0.5,
            task_statement: DEFAULT_TASK.into(),
            personas: None,
            provider: ProviderConfig::default(),
        }
    }
}

fn parsed<T: std::str::FromStr>(field: &'static str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Invalid { field, message: e.to_string() })
}

impl ServerConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// Apply overrides from `lookup` (normally `std::env::var`). Relative
    /// paths are left untouched.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("COACHLAB_PORT") {
            self.port = parsed("port", &v)?;
        }
        if let Some(v) = lookup("COACHLAB_HOST") {
            self.host = v;
        }
        if let Some(v) = lookup("COACHLAB_SESSION_LIMIT_MS") {
            self.session_limit_ms = parsed("session_limit_ms", &v)?;
        }
        if let Some(v) = lookup("COACHLAB_TREATMENT_PROBABILITY") {
            self.treatment_probability = parsed("treatment_probability", &v)?;
        }
        if let Some(v) = lookup("COACHLAB_API_KEY").or_else(|| lookup("OPENAI_API_KEY")) {
            self.provider.api_key = Some(v);
        }
        if let Some(v) = lookup("COACHLAB_BASE_URL") {
            self.provider.base_url = v;
        }
        if let Some(v) = lookup("COACHLAB_DATA_DIR") {
            self.data_dir = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn validate(&self, offline_stub: bool) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.treatment_probability) {
            return Err(ConfigError::Invalid {
                field: "treatment_probability",
                message: format!("{} is outside [0, 1]", self.treatment_probability),
            });
        }
        if self.session_limit_ms <= 0 {
            return Err(ConfigError::Invalid { field: "session_limit_ms", message: "must be positive".into() });
        }
        if self.grace_ms < 0 {
            return Err(ConfigError::Invalid { field: "grace_ms", message: "must not be negative".into() });
        }
        if !offline_stub && self.provider.api_key.as_deref().is_none_or(|k| k.trim().is_empty()) {
            return Err(ConfigError::MissingCredential("provider.api_key"));
        }
        Ok(())
    }

    pub fn persona_set(&self) -> Result<PersonaSet, ConfigError> {
        match &self.personas {
            None => Ok(PersonaSet::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                Ok(PersonaSet::from_toml_str(&text)?)
            }
        }
    }
}
