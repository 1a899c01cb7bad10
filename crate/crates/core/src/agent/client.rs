//! Chat-completion clients: a live HTTP backend and a scripted mock.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub const MOCK_SEPARATOR: &str = "=== response ===";

pub const ENV_ENDPOINT: &str = "CONFX_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "CONFX_LLM_MODEL";
pub const ENV_API_KEY: &str = "CONFX_API_KEY";

const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("the scripted client has no response left")]
    Exhausted,
    #[error("client configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

pub trait LlmClient {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError>;

    fn name(&self) -> String;
}

/// Replays canned responses in order. A fixture is a text file where each
/// response follows a `=== response ===` line; anything before the first
/// separator is a free-form header.
#[derive(Debug, Clone)]
pub struct MockClient {
    label: String,
    responses: Vec<String>,
    next: usize,
}

impl MockClient {
    pub fn new(responses: Vec<String>) -> Self {
        MockClient { label: "mock".into(), responses, next: 0 }
    }

    pub fn parse(fixture: &str) -> Self {
        let mut responses = Vec::new();
        let mut current: Option<Vec<&str>> = None;
        for line in fixture.lines() {
            if line.trim_end() == MOCK_SEPARATOR {
                if let Some(lines) = current.take() {
                    responses.push(lines.join("\n"));
                }
                current = Some(Vec::new());
            } else if let Some(lines) = current.as_mut() {
                lines.push(line);
            }
        }
        if let Some(lines) = current {
            responses.push(lines.join("\n"));
        }
        MockClient::new(responses)
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let mut m = MockClient::parse(&text);
        m.label = format!("mock:{}", path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default());
        Ok(m)
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.next
    }
}

impl LlmClient for MockClient {
    fn complete(&mut self, _req: &ChatRequest) -> Result<String, LlmError> {
        let r = self.responses.get(self.next).cloned().ok_or(LlmError::Exhausted)?;
        self.next += 1;
        Ok(r)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// OpenAI-style chat-completion endpoint. Only temperature and top_p are
/// sent; other sampling parameters stay at the backend defaults.
pub struct LiveClient {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(300))).build();
        LiveClient { endpoint: endpoint.into(), model: model.into(), api_key: api_key.into(), agent: config.into() }
    }

    /// Reads endpoint, model and key from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY).map_err(|_| LlmError::Config(format!("{ENV_API_KEY} is not set")))?;
        let endpoint = std::env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.into());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Ok(LiveClient::new(endpoint, model, key))
    }
}

impl LlmClient for LiveClient {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "top_p": req.top_p,
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse(format!("no message content in {value}")))
    }

    fn name(&self) -> String {
        format!("live:{}", self.model)
    }
}
