//! Chat-completion backends.

use std::path::Path;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::PromptBundle;

pub const API_KEY_ENV: &str = "PREDIFIX_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend request timed out: {0}")]
    Timeout(String),
    #[error("backend returned HTTP status {0}")]
    HttpStatus(u16),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::HttpStatus(s) => *s == 429 || *s >= 500,
            _ => false,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub trigger_substring: String,
    pub response: String,
}

/// Deterministic backend: the first rule whose trigger occurs in the user
/// prompt answers, otherwise the default response.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockBackend {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_response: String,
}

impl MockBackend {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::Config(format!("mock config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError> {
        Ok(self
            .rules
            .iter()
            .find(|r| prompt.user_text.contains(&r.trigger_substring))
            .map(|r| r.response.clone())
            .unwrap_or_else(|| self.default_response.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retry: bool,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            timeout_secs: 120,
            retry: true,
        }
    }
}

/// OpenAI-style chat completion over HTTP, temperature 0.
pub struct HttpBackend {
    settings: HttpSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Reads the bearer token from `PREDIFIX_API_KEY` if set.
    pub fn new(settings: HttpSettings) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(settings, api_key)
    }

    pub fn with_key(settings: HttpSettings, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            settings,
            api_key,
            agent,
        }
    }

    fn request_once(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.settings.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus(status));
        }
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

fn transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(t) => BackendError::Timeout(t.to_string()),
        ureq::Error::StatusCode(s) => BackendError::HttpStatus(s),
        other => BackendError::Transport(other.to_string()),
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, BackendError> {
        let body = json!({
            "model": self.settings.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        });
        match self.request_once(&body) {
            Err(e) if self.settings.retry && e.is_transient() => {
                warn!("backend request failed ({e}); retrying once");
                self.request_once(&body)
            }
            other => {
                debug!("backend request done");
                other
            }
        }
    }
}
