//! Blocking client for chat-completion style HTTP endpoints, shared by the
//! remote policy backend and the remote oracle.
//!
//! Transient failures (connection errors, HTTP 5xx, HTTP 429) are retried
//! with capped exponential backoff. Authentication failures are never
//! retried. The bearer token is read from an environment variable and never
//! logged.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::{debug, warn};

use crate::limit::Semaphore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_max_retries() -> u32 {
    3
}
fn default_initial_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    8_000
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_in_flight() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            token_env: None,
            max_retries: default_max_retries(),
            initial_backoff_ms: default_initial_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_max_in_flight(),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("prompt exceeds the model context: {0}")]
    ContextOverflow(String),
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: usize,
    pub n: usize,
    pub logprobs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatChoice {
    pub content: String,
    /// `(token, logprob)` pairs when the endpoint reports them.
    pub logprobs: Option<Vec<(String, f64)>>,
}

pub struct ChatClient {
    config: EndpointConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
    in_flight: Semaphore,
}

enum Attempt {
    Done(Vec<ChatChoice>),
    Retry(ChatError),
    Fatal(ChatError),
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ChatError> {
        let token = match &config.token_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ChatError::Auth(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Unavailable(e.to_string()))?;
        Ok(Self { in_flight: Semaphore::new(config.max_in_flight), config, token, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn complete(&self, request: &ChatRequest<'_>) -> Result<Vec<ChatChoice>, ChatError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "n": request.n,
            "logprobs": request.logprobs,
        });
        debug!(url = %self.config.url, authorization = if self.token.is_some() { "Bearer ***" } else { "none" }, %body, "chat request");

        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            let err = match self.attempt(&body) {
                Attempt::Done(choices) => return Ok(choices),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => e,
            };
            if attempt >= self.config.max_retries {
                return Err(match err {
                    ChatError::RateLimited { .. } => ChatError::RateLimited { attempts: attempt + 1 },
                    other => other,
                });
            }
            let delay = self.config.backoff(attempt);
            warn!(attempt = attempt + 1, error = %err, delay_ms = delay.as_millis() as u64, "retrying chat request");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.http.post(&self.config.url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let response = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(ChatError::Unavailable(e.to_string())),
        };
        let status = response.status();
        let text = response.text().unwrap_or_default();
        debug!(status = status.as_u16(), body = %text, "chat response");
        match status.as_u16() {
            200..=299 => match parse_choices(&text) {
                Ok(c) => Attempt::Done(c),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(ChatError::Auth(format!("HTTP {status}"))),
            429 => Attempt::Retry(ChatError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(ChatError::Unavailable(format!("HTTP {status}"))),
            _ if text.contains("context_length") || text.contains("maximum context") => {
                Attempt::Fatal(ChatError::ContextOverflow(text))
            }
            _ => Attempt::Fatal(ChatError::Unavailable(format!("HTTP {status}: {text}"))),
        }
    }
}

fn parse_choices(text: &str) -> Result<Vec<ChatChoice>, ChatError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ChatError::Malformed(e.to_string()))?;
    let choices = v["choices"]
        .as_array()
        .ok_or_else(|| ChatError::Malformed("missing `choices` array".into()))?;
    choices
        .iter()
        .map(|c| {
            let content = c["message"]["content"]
                .as_str()
                .ok_or_else(|| ChatError::Malformed("choice without message content".into()))?
                .to_string();
            let logprobs = c["logprobs"]["content"].as_array().map(|items| {
                items
                    .iter()
                    .filter_map(|it| Some((it["token"].as_str()?.to_string(), it["logprob"].as_f64()?)))
                    .collect()
            });
            Ok(ChatChoice { content, logprobs })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_style_reply() {
        let reply = r#"{"choices":[{"message":{"content":"hi"},"logprobs":{"content":[{"token":"hi","logprob":-0.5}]}},{"message":{"content":"yo"}}]}"#;
        let c = parse_choices(reply).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].logprobs.as_deref(), Some(&[("hi".to_string(), -0.5)][..]));
        assert!(c[1].logprobs.is_none());
        assert!(matches!(parse_choices("{}"), Err(ChatError::Malformed(_))));
    }

    #[test]
    fn backoff_is_capped() {
        let mut cfg = EndpointConfig::new("http://x", "m");
        cfg.initial_backoff_ms = 100;
        cfg.max_backoff_ms = 350;
        assert_eq!(cfg.backoff(0), Duration::from_millis(100));
        assert_eq!(cfg.backoff(1), Duration::from_millis(200));
        assert_eq!(cfg.backoff(2), Duration::from_millis(350));
    }
}
