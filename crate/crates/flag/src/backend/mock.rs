//! A deterministic in-process backend scripted per target line.
//!
//! The mock is built over a file's checkable lines and works out which line a
//! prompt targets from the prefix window, so scripts can be keyed by original
//! line number — the same numbers a benchmark manifest uses.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{first_line, BackendDescriptor, BackendError, BackendKind, CompletionBackend, GeneratedLine};
use crate::prompting::{GenerationParams, Prompt};
use crate::srcmodel::PreprocessedFile;

/// What the mock answers for one line.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MockBehavior {
    /// Return the original line verbatim (an edit distance of 0).
    #[default]
    Echo,
    /// Always return this text.
    Fixed {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logprobs: Option<Vec<f64>>,
    },
    /// Return the empty string for the first `empties` calls, then the text.
    EmptyThen {
        empties: u32,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logprobs: Option<Vec<f64>>,
    },
}

/// A whole mock script: a default behavior plus per-line overrides keyed by
/// original line number. Loadable from JSON for CLI runs.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MockScript {
    #[serde(default)]
    pub default: MockBehavior,
    #[serde(default)]
    pub lines: BTreeMap<u32, MockBehavior>,
    /// Advertise logprob support; behaviors without explicit logprobs then
    /// report an empty list rather than none.
    #[serde(default)]
    pub supports_logprobs: bool,
}

impl MockScript {
    pub fn echo() -> MockScript {
        MockScript::default()
    }

    pub fn with_line(mut self, line_no: u32, behavior: MockBehavior) -> MockScript {
        self.lines.insert(line_no, behavior);
        self
    }

    pub fn with_logprobs(mut self) -> MockScript {
        self.supports_logprobs = true;
        self
    }
}

/// Scripted backend bound to one preprocessed file.
pub struct ScriptedMock {
    descriptor: BackendDescriptor,
    lines: Vec<String>,
    line_numbers: Vec<u32>,
    script: MockScript,
    /// Per-line call counts, for `EmptyThen`.
    counters: Mutex<BTreeMap<u32, u32>>,
}

impl ScriptedMock {
    pub fn for_file(file: &PreprocessedFile, script: MockScript) -> ScriptedMock {
        ScriptedMock {
            descriptor: BackendDescriptor {
                kind: BackendKind::ScriptedMock,
                model_name: "scripted-mock".to_string(),
                endpoint: None,
                supports_suffix: true,
                supports_logprobs: script.supports_logprobs,
                supports_system_prompt: true,
            },
            lines: file.lines.iter().map(|l| l.raw.clone()).collect(),
            line_numbers: file.lines.iter().map(|l| l.original_line_no).collect(),
            script,
            counters: Mutex::new(BTreeMap::new()),
        }
    }

    /// Echo-everything mock: every line regenerates as itself.
    pub fn echo(file: &PreprocessedFile) -> ScriptedMock {
        ScriptedMock::for_file(file, MockScript::echo())
    }

    /// Recover which checkable index the prompt targets. A prefix shorter
    /// than the window cap must be the start of the file; a full window is
    /// matched against the known lines.
    fn locate(&self, prompt: &Prompt, params: &GenerationParams) -> Option<usize> {
        let prefix_lines: Vec<&str> = if prompt.prefix.is_empty() {
            Vec::new()
        } else {
            prompt.prefix.split('\n').collect()
        };
        let p = prefix_lines.len();
        if p > self.lines.len() {
            return None;
        }
        let matches_at = |j: usize| {
            self.lines[j..j + p]
                .iter()
                .map(String::as_str)
                .eq(prefix_lines.iter().copied())
        };
        if p < params.max_pre_len {
            return (matches_at(0) && p < self.lines.len()).then_some(p);
        }
        (0..=self.lines.len() - p)
            .find(|&j| matches_at(j))
            .filter(|j| j + p < self.lines.len())
            .map(|j| j + p)
    }
}

impl CompletionBackend for ScriptedMock {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(
        &self,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<GeneratedLine, BackendError> {
        let loc = self.locate(prompt, params).ok_or_else(|| {
            BackendError::Transport("mock: prompt does not match the scripted file".to_string())
        })?;
        let line_no = self.line_numbers[loc];
        let behavior = self.script.lines.get(&line_no).unwrap_or(&self.script.default);

        let (text, logprobs) = match behavior {
            MockBehavior::Echo => {
                // Return only what follows the assist so the compared text
                // (assist ++ completion) equals the original line.
                let original = self.lines[loc].as_str();
                let completion = original.strip_prefix(prompt.assist.as_str()).unwrap_or(original);
                (completion.to_string(), None)
            }
            MockBehavior::Fixed { text, logprobs } => (text.clone(), logprobs.clone()),
            MockBehavior::EmptyThen { empties, text, logprobs } => {
                let mut counters = self.counters.lock().expect("mock counter lock");
                let seen = counters.entry(line_no).or_insert(0);
                *seen += 1;
                if *seen <= *empties {
                    (String::new(), None)
                } else {
                    (text.clone(), logprobs.clone())
                }
            }
        };

        let logprobs = if self.descriptor.supports_logprobs {
            Some(logprobs.unwrap_or_default())
        } else {
            None
        };
        Ok(GeneratedLine::new(first_line(&text).to_string(), logprobs))
    }
}
