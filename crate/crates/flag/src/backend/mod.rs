//! Completion backends and the per-line generation loop.
//!
//! Three interchangeable backends sit behind one trait: an OpenAI-compatible
//! HTTP client, a record/replay cache, and a scripted in-process mock for
//! tests and dry runs. [`generate_line`] drives any of them through the
//! shared retry rules.

mod http;
mod mock;
mod replay;

pub use http::{ApiFamily, HttpBackend, RetryPolicy};
pub use mock::{MockBehavior, MockScript, ScriptedMock};
pub use replay::{CacheRecord, CachingBackend};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::{apply_assist, build_prompt, GenerationParams, Prompt, PromptError, PromptMode};
use crate::srcmodel::{split_line, PreprocessedFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenAiCompatible,
    ReplayCache,
    ScriptedMock,
}

/// What a backend is and what it can do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub supports_suffix: bool,
    pub supports_logprobs: bool,
    pub supports_system_prompt: bool,
}

/// One generated line, after any retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLine {
    /// Final compared text: the assist (if one was used) plus the completion.
    /// Never contains a newline.
    pub text: String,
    /// Logprobs of the generated tokens, stop token excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    /// Completion calls made: 1 on first success, at most `max_attempts + 1`.
    pub attempts_used: u32,
    /// Errors and anomalies noted along the way.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors_noted: Vec<String>,
    #[serde(default)]
    pub from_cache: bool,
}

impl GeneratedLine {
    pub fn new(text: String, token_logprobs: Option<Vec<f64>>) -> GeneratedLine {
        GeneratedLine {
            text,
            token_logprobs,
            attempts_used: 1,
            errors_noted: Vec::new(),
            from_cache: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after retries: {0}")]
    RateLimited(String),
    #[error("backend does not support {0}")]
    Capability(String),
    #[error("no cached response for key {0} and no upstream to ask")]
    CacheMiss(String),
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl BackendError {
    /// Errors a retry cannot fix; the generation loop only re-asks on the rest.
    pub fn is_fatal(&self) -> bool {
        match self {
            BackendError::Auth(_)
            | BackendError::Capability(_)
            | BackendError::CacheMiss(_)
            | BackendError::Cache(_)
            | BackendError::Prompt(_) => true,
            BackendError::Api { status, .. } => (400..500).contains(status) && *status != 429,
            BackendError::Transport(_) | BackendError::RateLimited(_) => false,
        }
    }
}

/// A source of single-line completions. `complete` makes exactly one request:
/// the retry rules live in [`generate_line`], transport-level backoff lives
/// inside the individual backend.
pub trait CompletionBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Return the first line of one completion for this prompt (text up to
    /// the stop token), with token logprobs when the backend has them.
    fn complete(&self, prompt: &Prompt, params: &GenerationParams)
        -> Result<GeneratedLine, BackendError>;
}

/// Text up to the first newline, with any trailing carriage return dropped.
pub fn first_line(text: &str) -> &str {
    let line = text.split('\n').next().unwrap_or("");
    line.strip_suffix('\r').unwrap_or(line)
}

/// Stable content digest identifying one completion request. Everything that
/// shapes the response participates; two prompts differing in a single
/// character get different keys.
pub fn cache_key(prompt: &Prompt, params: &GenerationParams, descriptor: &BackendDescriptor) -> String {
    let payload = serde_json::json!([
        prompt.mode.name(),
        prompt.system_instruction,
        prompt.prefix,
        prompt.assist,
        prompt.suffix,
        descriptor.model_name,
        params.temperature,
        params.max_tokens,
        params.top_p,
        params.stop,
    ]);
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

/// Short digest of everything that shapes a whole run (backend, mode, and
/// sampling parameters), used to label reports and stored run records.
pub fn run_fingerprint(
    descriptor: &BackendDescriptor,
    mode: PromptMode,
    params: &GenerationParams,
) -> String {
    let payload = serde_json::json!([
        descriptor.kind,
        descriptor.model_name,
        descriptor.endpoint,
        mode.name(),
        params,
    ]);
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))[..12].to_string()
}

/// Generate the line at checkable index `loc` with bounded retries.
///
/// Retry rules, each spending one unit of the same `max_attempts` budget:
/// an empty response is re-asked, and a comment-only response to a code line
/// is re-asked. From the first retry onward the prompt carries an assist (the
/// first `assist_chars` characters of the original line), and the compared
/// text becomes `assist ++ completion`. On exhaustion the last response is
/// returned as-is with a note; transient backend errors are noted and retried
/// within the same budget, while fatal ones abort immediately.
pub fn generate_line(
    file: &PreprocessedFile,
    loc: usize,
    mode: PromptMode,
    params: &GenerationParams,
    backend: &dyn CompletionBackend,
) -> Result<GeneratedLine, BackendError> {
    let descriptor = backend.descriptor();
    match mode {
        PromptMode::Insertion if !descriptor.supports_suffix => {
            return Err(BackendError::Capability("suffix (insertion mode)".into()))
        }
        PromptMode::InstructedComplete if !descriptor.supports_system_prompt => {
            return Err(BackendError::Capability(
                "system prompts (instructed mode)".into(),
            ))
        }
        _ => {}
    }

    let base = build_prompt(file, loc, mode, params)?;
    let profile = file.profile();
    let original = &file.lines[loc];
    let original_is_code = original.is_code();

    let mut attempts: u32 = 0; // retries spent so far
    let mut notes: Vec<String> = Vec::new();
    let mut last: Option<GeneratedLine> = None;

    loop {
        let prompt = if attempts > 0 {
            apply_assist(base.clone(), original, params)
        } else {
            base.clone()
        };

        match backend.complete(&prompt, params) {
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                notes.push(format!("attempt {}: {e}", attempts + 1));
                if attempts < params.max_attempts {
                    attempts += 1;
                    continue;
                }
                // Out of budget: fall back to the most recent response if any
                // attempt produced one, otherwise give up.
                return match last.take() {
                    Some(mut g) => {
                        g.attempts_used = attempts + 1;
                        g.errors_noted = notes;
                        Ok(g)
                    }
                    None => Err(e),
                };
            }
            Ok(mut g) => {
                let raw = std::mem::take(&mut g.text);
                g.text = format!("{}{}", prompt.assist, raw);

                let response_empty = raw.trim().is_empty();
                let response_is_comment = {
                    let (code, comment, _) = split_line(raw.trim_end(), &profile, false);
                    code.trim().is_empty() && !comment.is_empty()
                };

                if response_empty {
                    if attempts < params.max_attempts {
                        attempts += 1;
                        last = Some(g);
                        continue;
                    }
                } else if original_is_code && response_is_comment {
                    if attempts < params.max_attempts {
                        attempts += 1;
                        last = Some(g);
                        continue;
                    }
                    notes.push("comment-for-code response kept after retries".to_string());
                }

                g.attempts_used = attempts + 1;
                g.errors_noted = notes;
                return Ok(g);
            }
        }
    }
}
