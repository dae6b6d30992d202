//! Optional TOML configuration. Every field is optional: settings resolve as
//! CLI flag, then config file, then environment, then built-in default. The
//! environment supplies only the API key (`FLAG_API_KEY`), so secrets never
//! appear on command lines or in config files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

/// Name of the environment variable holding the API key.
pub const API_KEY_VAR: &str = "FLAG_API_KEY";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub criterion: CriterionSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// mock, replay, or http.
    pub kind: Option<String>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    /// completions or chat.
    pub api: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    /// auto, insert, or instruct.
    pub mode: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub top_p: Option<f64>,
    pub stop: Option<String>,
    pub max_attempts: Option<u32>,
    pub assist_chars: Option<usize>,
    pub max_pre_len: Option<usize>,
    pub max_suf_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSection {
    /// c0, c1, or c2.
    pub kind: Option<String>,
    pub ld_limit: Option<usize>,
    pub dfc_limit: Option<usize>,
    pub logprob_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub parallelism: Option<usize>,
    /// text or json.
    pub output: Option<String>,
    pub language: Option<String>,
    pub start_line: Option<u32>,
}

/// Load a config file; a `None` path yields an all-default config.
pub fn load_config(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        source: Box::new(e),
    })
}

/// The API key, if the environment provides one.
pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty())
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
}
