//! OpenAI-compatible HTTP backend. Plain completion endpoints take a prompt
//! (and optionally a suffix and logprobs); chat endpoints take a message list
//! and carry the system instruction for instructed mode. Rate limits and
//! transient failures are retried here with exponential backoff and jitter;
//! anything unrecoverable surfaces as an error, never as an empty line.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{first_line, BackendDescriptor, BackendError, BackendKind, CompletionBackend, GeneratedLine};
use crate::prompting::{GenerationParams, Prompt};

/// Which request shape the endpoint speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiFamily {
    /// `/completions`: raw prompt, optional suffix, logprobs available.
    Completions,
    /// `/chat/completions`: message list, system prompt available.
    Chat,
}

impl std::str::FromStr for ApiFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "completions" => Ok(ApiFamily::Completions),
            "chat" => Ok(ApiFamily::Chat),
            other => Err(format!("unknown api family `{other}` (expected completions or chat)")),
        }
    }
}

/// Backoff settings for rate limits and transient transport failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy { max_retries: 4, base_delay_ms: 250 }
    }
}

impl RetryPolicy {
    /// Exponential delay with jitter, capped at four seconds per wait.
    fn delay(&self, attempt: u32) -> Duration {
        let backoff = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(4_000);
        let jitter = if self.base_delay_ms == 0 {
            0
        } else {
            rand::thread_rng().gen_range(0..=self.base_delay_ms / 2)
        };
        Duration::from_millis(backoff + jitter)
    }
}

pub struct HttpBackend {
    descriptor: BackendDescriptor,
    family: ApiFamily,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(
        model_name: &str,
        endpoint: &str,
        family: ApiFamily,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> HttpBackend {
        let (supports_suffix, supports_logprobs, supports_system_prompt) = match family {
            ApiFamily::Completions => (true, true, false),
            ApiFamily::Chat => (false, false, true),
        };
        HttpBackend {
            descriptor: BackendDescriptor {
                kind: BackendKind::HttpOpenAiCompatible,
                model_name: model_name.to_string(),
                endpoint: Some(endpoint.trim_end_matches('/').to_string()),
                supports_suffix,
                supports_logprobs,
                supports_system_prompt,
            },
            family,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
            api_key,
            retry,
        }
    }

    fn url(&self) -> String {
        let base = self.descriptor.endpoint.as_deref().unwrap_or("");
        match self.family {
            ApiFamily::Completions => format!("{base}/completions"),
            ApiFamily::Chat => format!("{base}/chat/completions"),
        }
    }

    fn body(&self, prompt: &Prompt, params: &GenerationParams) -> serde_json::Value {
        match self.family {
            ApiFamily::Completions => serde_json::to_value(CompletionsRequest {
                model: &self.descriptor.model_name,
                prompt: prompt.completion_text(),
                suffix: prompt.suffix.clone(),
                max_tokens: params.max_tokens,
                temperature: params.temperature,
                top_p: params.top_p,
                stop: &params.stop,
                logprobs: self.descriptor.supports_logprobs.then_some(0),
            }),
            ApiFamily::Chat => {
                let mut messages = Vec::new();
                if let Some(system) = &prompt.system_instruction {
                    messages.push(ChatMessage { role: "system", content: system.clone() });
                }
                messages.push(ChatMessage { role: "user", content: prompt.completion_text() });
                serde_json::to_value(ChatRequest {
                    model: &self.descriptor.model_name,
                    messages,
                    max_tokens: params.max_tokens,
                    temperature: params.temperature,
                    top_p: params.top_p,
                    stop: &params.stop,
                })
            }
        }
        .expect("request body is serializable")
    }

    fn parse_success(&self, body: &str, params: &GenerationParams) -> Result<GeneratedLine, BackendError> {
        match self.family {
            ApiFamily::Completions => {
                let parsed: CompletionsResponse = serde_json::from_str(body)
                    .map_err(|e| BackendError::Transport(format!("malformed response: {e}")))?;
                let choice = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
                let text = first_line(&choice.text).to_string();
                let logprobs = choice
                    .logprobs
                    .map(|lp| truncate_at_stop(lp, &params.stop))
                    .or_else(|| self.descriptor.supports_logprobs.then(Vec::new));
                Ok(GeneratedLine::new(text, logprobs))
            }
            ApiFamily::Chat => {
                let parsed: ChatResponse = serde_json::from_str(body)
                    .map_err(|e| BackendError::Transport(format!("malformed response: {e}")))?;
                let choice = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
                Ok(GeneratedLine::new(first_line(&choice.message.content).to_string(), None))
            }
        }
    }
}

/// Drop logprob entries at and beyond the stop token. The token strings tell
/// us where generation would have been cut; without them the list is taken
/// as-is (nulls skipped either way).
fn truncate_at_stop(block: LogprobBlock, stop: &str) -> Vec<f64> {
    let logprobs = block.token_logprobs.unwrap_or_default();
    let cut = match &block.tokens {
        Some(tokens) => tokens
            .iter()
            .position(|t| t == stop || t.contains('\n'))
            .unwrap_or(tokens.len()),
        None => logprobs.len(),
    };
    logprobs.into_iter().take(cut).flatten().collect()
}

impl CompletionBackend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(
        &self,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<GeneratedLine, BackendError> {
        let url = self.url();
        let body = self.body(prompt, params);

        let mut attempt = 0u32;
        loop {
            let mut request = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }

            let retry_or = |attempt: u32, err: BackendError| -> Result<(), BackendError> {
                if attempt < self.retry.max_retries {
                    std::thread::sleep(self.retry.delay(attempt));
                    Ok(())
                } else {
                    Err(err)
                }
            };

            match request.send() {
                Err(e) => retry_or(attempt, BackendError::Transport(e.to_string()))?,
                Ok(response) => {
                    let status = response.status().as_u16();
                    let retry_after = response
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.parse::<u64>().ok());
                    let text = response.text().unwrap_or_default();
                    match status {
                        200 => return self.parse_success(&text, params),
                        401 | 403 => return Err(BackendError::Auth(api_message(&text, status))),
                        429 => {
                            if attempt < self.retry.max_retries {
                                let wait = retry_after
                                    .map(|s| Duration::from_secs(s.min(30)))
                                    .unwrap_or_else(|| self.retry.delay(attempt));
                                std::thread::sleep(wait);
                            } else {
                                return Err(BackendError::RateLimited(api_message(&text, status)));
                            }
                        }
                        500..=599 => retry_or(
                            attempt,
                            BackendError::Api { status, message: api_message(&text, status) },
                        )?,
                        _ => {
                            return Err(BackendError::Api {
                                status,
                                message: api_message(&text, status),
                            })
                        }
                    }
                }
            }
            attempt += 1;
        }
    }
}

fn api_message(body: &str, status: u16) -> String {
    #[derive(Deserialize)]
    struct ErrBody {
        error: Option<ErrObj>,
    }
    #[derive(Deserialize)]
    struct ErrObj {
        message: Option<String>,
    }
    serde_json::from_str::<ErrBody>(body)
        .ok()
        .and_then(|b| b.error)
        .and_then(|e| e.message)
        .unwrap_or_else(|| format!("http status {status}"))
}

#[derive(Serialize)]
struct CompletionsRequest<'a> {
    model: &'a str,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    suffix: Option<String>,
    max_tokens: u32,
    temperature: f64,
    top_p: f64,
    stop: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
}

#[derive(Serialize)]
struct ChatMessage {
    role: &'static str,
    content: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    max_tokens: u32,
    temperature: f64,
    top_p: f64,
    stop: &'a str,
}

#[derive(Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
}

#[derive(Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    token_logprobs: Option<Vec<Option<f64>>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::PromptMode;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    /// One-thread stub that serves a fixed list of responses in order.
    fn stub(responses: Vec<(u16, String)>) -> (String, Arc<AtomicU32>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicU32::new(0));
        let seen = Arc::clone(&hits);
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut sock, _) = match listener.accept() {
                    Ok(pair) => pair,
                    Err(_) => return,
                };
                seen.fetch_add(1, Ordering::SeqCst);
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                // Read headers, then the declared body length.
                let body_len = loop {
                    let n = sock.read(&mut chunk).unwrap_or(0);
                    if n == 0 {
                        break 0;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(end) = find_headers_end(&buf) {
                        let headers = String::from_utf8_lossy(&buf[..end]);
                        let want: usize = headers
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap_or(0)))
                            .unwrap_or(0);
                        let have = buf.len() - end;
                        if have >= want {
                            break want;
                        }
                    }
                };
                let _ = body_len;
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = sock.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn find_headers_end(buf: &[u8]) -> Option<usize> {
        buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
    }

    fn quick_retry() -> RetryPolicy {
        RetryPolicy { max_retries: 1, base_delay_ms: 0 }
    }

    fn prompt() -> Prompt {
        Prompt {
            mode: PromptMode::AutoComplete,
            prefix: "int a;".into(),
            suffix: None,
            assist: String::new(),
            system_instruction: None,
        }
    }

    #[test]
    fn completions_parse_text_and_truncated_logprobs() {
        let body = serde_json::json!({
            "choices": [{
                "text": "return 0;\nint next;",
                "logprobs": {
                    "tokens": ["return", " 0", ";", "\n", "int"],
                    "token_logprobs": [-0.1, -0.2, -0.3, -0.9, -1.5]
                }
            }]
        });
        let (url, _) = stub(vec![(200, body.to_string())]);
        let b = HttpBackend::new("m", &url, ApiFamily::Completions, None, quick_retry());
        let g = b.complete(&prompt(), &GenerationParams::default()).unwrap();
        assert_eq!(g.text, "return 0;");
        // The newline stop token and everything after it is excluded.
        assert_eq!(g.token_logprobs, Some(vec![-0.1, -0.2, -0.3]));
    }

    #[test]
    fn chat_parses_message_content() {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "x = 1\nleftover"}}]
        });
        let (url, _) = stub(vec![(200, body.to_string())]);
        let b = HttpBackend::new("m", &url, ApiFamily::Chat, None, quick_retry());
        let g = b.complete(&prompt(), &GenerationParams::default()).unwrap();
        assert_eq!(g.text, "x = 1");
        assert_eq!(g.token_logprobs, None);
    }

    #[test]
    fn auth_failures_do_not_retry() {
        let body = serde_json::json!({"error": {"message": "bad key"}});
        let (url, hits) = stub(vec![(401, body.to_string()), (401, body.to_string())]);
        let b = HttpBackend::new("m", &url, ApiFamily::Completions, Some("k".into()), quick_retry());
        let err = b.complete(&prompt(), &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, BackendError::Auth(m) if m == "bad key"));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rate_limit_retries_then_succeeds() {
        let ok = serde_json::json!({"choices": [{"text": "done"}]});
        let (url, hits) = stub(vec![
            (429, "{}".to_string()),
            (200, ok.to_string()),
        ]);
        let b = HttpBackend::new("m", &url, ApiFamily::Completions, None, quick_retry());
        let g = b.complete(&prompt(), &GenerationParams::default()).unwrap();
        assert_eq!(g.text, "done");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn server_errors_retry_then_surface() {
        let (url, hits) = stub(vec![(500, "{}".to_string()), (500, "{}".to_string())]);
        let b = HttpBackend::new("m", &url, ApiFamily::Completions, None, quick_retry());
        let err = b.complete(&prompt(), &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, BackendError::Api { status: 500, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn family_sets_capabilities() {
        let c = HttpBackend::new("m", "http://x", ApiFamily::Completions, None, quick_retry());
        assert!(c.descriptor().supports_suffix);
        assert!(c.descriptor().supports_logprobs);
        assert!(!c.descriptor().supports_system_prompt);

        let chat = HttpBackend::new("m", "http://x", ApiFamily::Chat, None, quick_retry());
        assert!(!chat.descriptor().supports_suffix);
        assert!(!chat.descriptor().supports_logprobs);
        assert!(chat.descriptor().supports_system_prompt);
    }
}
