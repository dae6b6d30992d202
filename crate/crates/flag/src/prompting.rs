//! Prompt assembly: a context window of lines around the target, an optional
//! suffix for insertion-capable models, and the retry assist that seeds the
//! completion with the first few characters of the original line.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::srcmodel::{PreprocessedFile, SourceLine};

/// How the model is asked for the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Continue from the preceding lines only.
    AutoComplete,
    /// Fill in between a prefix and a suffix (needs suffix support).
    Insertion,
    /// Chat-style completion with a fixed system instruction.
    InstructedComplete,
}

impl PromptMode {
    pub fn name(&self) -> &'static str {
        match self {
            PromptMode::AutoComplete => "auto_complete",
            PromptMode::Insertion => "insertion",
            PromptMode::InstructedComplete => "instructed_complete",
        }
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" | "auto_complete" | "auto-complete" => Ok(PromptMode::AutoComplete),
            "insert" | "insertion" => Ok(PromptMode::Insertion),
            "instruct" | "instructed_complete" | "instructed-complete" => {
                Ok(PromptMode::InstructedComplete)
            }
            other => Err(format!(
                "unknown mode `{other}` (expected auto, insert, or instruct)"
            )),
        }
    }
}

/// System text used by [`PromptMode::InstructedComplete`].
pub const SYSTEM_INSTRUCTION: &str =
    "You are a skilled AI programming assistant. Complete the next line of code.";

/// One assembled request context.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub mode: PromptMode,
    /// Up to `max_pre_len` checkable lines before the target, joined by `\n`.
    pub prefix: String,
    /// Up to `max_suf_len` checkable lines after the target (insertion only).
    pub suffix: Option<String>,
    /// Leading characters of the original line seeded on retries; the final
    /// compared text is `assist ++ completion`.
    pub assist: String,
    pub system_instruction: Option<String>,
}

impl Prompt {
    /// Text a plain-completion endpoint continues from: the prefix, then the
    /// assist on its own (unfinished) line.
    pub fn completion_text(&self) -> String {
        match (self.prefix.is_empty(), self.assist.is_empty()) {
            (_, true) => self.prefix.clone(),
            (true, false) => self.assist.clone(),
            (false, false) => format!("{}\n{}", self.prefix, self.assist),
        }
    }
}

/// Sampling and retry settings shared by every backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    /// Stop sequence; generation is a single line, so this stays a newline.
    pub stop: String,
    /// Retry budget: at most `max_attempts` retries after the first call.
    pub max_attempts: u32,
    /// Characters of the original line used as the retry assist.
    pub assist_chars: usize,
    pub max_pre_len: usize,
    pub max_suf_len: usize,
}

impl Default for GenerationParams {
    fn default() -> GenerationParams {
        GenerationParams {
            temperature: 0.0,
            max_tokens: 150,
            top_p: 1.0,
            stop: "\n".to_string(),
            max_attempts: 3,
            assist_chars: 4,
            max_pre_len: 50,
            max_suf_len: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("line index {loc} is out of range ({len} checkable lines)")]
    LocOutOfRange { loc: usize, len: usize },
}

/// Build the prompt for the line at checkable index `loc`.
pub fn build_prompt(
    file: &PreprocessedFile,
    loc: usize,
    mode: PromptMode,
    params: &GenerationParams,
) -> Result<Prompt, PromptError> {
    if loc >= file.lines.len() {
        return Err(PromptError::LocOutOfRange {
            loc,
            len: file.lines.len(),
        });
    }
    let join = |lines: &[SourceLine]| {
        lines
            .iter()
            .map(|l| l.raw.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let from = loc.saturating_sub(params.max_pre_len);
    let prefix = join(&file.lines[from..loc]);
    let suffix = (mode == PromptMode::Insertion).then(|| {
        let end = (loc + 1 + params.max_suf_len).min(file.lines.len());
        join(&file.lines[loc + 1..end])
    });
    let system_instruction =
        (mode == PromptMode::InstructedComplete).then(|| SYSTEM_INSTRUCTION.to_string());
    Ok(Prompt {
        mode,
        prefix,
        suffix,
        assist: String::new(),
        system_instruction,
    })
}

/// Seed the prompt with the first `assist_chars` characters of the original
/// line. Idempotent: the assist is set, not accumulated.
pub fn apply_assist(mut prompt: Prompt, original: &SourceLine, params: &GenerationParams) -> Prompt {
    prompt.assist = original.raw.chars().take(params.assist_chars).collect();
    prompt
}
