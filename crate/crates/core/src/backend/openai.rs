//! Client for OpenAI-compatible `/chat/completions` endpoints.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::message::{estimate_usage, CallContext, ChatMessage, Completion, SamplingParams};
use super::ChatBackend;
use crate::domain::TokenUsage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OpenAiConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Whether the server honours `n > 1` in a single request.
    pub native_n: bool,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            native_n: true,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n: usize,
}

impl<'a> ChatRequest<'a> {
    pub fn new(model: &'a str, messages: &'a [ChatMessage], params: &SamplingParams) -> Self {
        Self {
            model,
            messages,
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            n: params.n,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: usize,
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub struct OpenAiBackend {
    name: String,
    config: OpenAiConfig,
    client: Client,
}

enum Attempt {
    Done(Completion),
    Retry(String),
    Fatal(Error),
}

impl OpenAiBackend {
    pub fn new(name: impl Into<String>, config: OpenAiConfig) -> Result<Self> {
        let name = name.into();
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::BackendUnavailable {
                backend: name.clone(),
                reason: format!("building HTTP client: {e}"),
            })?;
        Ok(Self {
            name,
            config,
            client,
        })
    }

    pub fn config(&self) -> &OpenAiConfig {
        &self.config
    }

    fn attempt(&self, body: &ChatRequest<'_>, messages: &[ChatMessage]) -> Attempt {
        let mut request = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Attempt::Retry(e.to_string())
            }
            Err(e) => {
                return Attempt::Fatal(self.unavailable(e.to_string()));
            }
        };
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            return Attempt::Fatal(self.unavailable(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(self.unavailable(format!("malformed response: {e}"))),
        };
        let mut choices = parsed.choices;
        choices.sort_by_key(|c| c.index);
        let texts: Vec<String> = choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect();
        if texts.is_empty() {
            return Attempt::Fatal(Error::EmptyCompletion {
                backend: self.name.clone(),
            });
        }
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => estimate_usage(messages, &texts),
        };
        Attempt::Done(Completion { texts, usage })
    }

    fn unavailable(&self, reason: String) -> Error {
        Error::BackendUnavailable {
            backend: self.name.clone(),
            reason,
        }
    }
}

impl ChatBackend for OpenAiBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn native_n(&self) -> bool {
        self.config.native_n
    }

    fn chat(
        &self,
        _call: &CallContext,
        messages: &[ChatMessage],
        params: &SamplingParams,
    ) -> Result<Completion> {
        let body = ChatRequest::new(&self.config.model, messages, params);
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff = backoff.saturating_mul(2);
            }
            match self.attempt(&body, messages) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(reason) => {
                    warn!(backend = %self.name, attempt, %reason, "transient backend failure");
                    last = reason;
                }
            }
        }
        Err(self.unavailable(format!(
            "giving up after {} retries: {last}",
            self.config.max_retries
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_is_exact() {
        let messages = [ChatMessage::system("sys"), ChatMessage::user("hi")];
        let params = SamplingParams::default().with_n(3);
        let body = serde_json::to_string(&ChatRequest::new("gpt-4o", &messages, &params)).unwrap();
        assert_eq!(
            body,
            r#"{"model":"gpt-4o","messages":[{"role":"system","content":"sys"},{"role":"user","content":"hi"}],"temperature":0.4,"top_p":0.95,"max_tokens":300,"n":3}"#
        );
    }

    #[test]
    fn endpoint_joins_cleanly() {
        assert_eq!(
            OpenAiConfig::new("http://h/v1/", "m").endpoint(),
            "http://h/v1/chat/completions"
        );
    }
}
