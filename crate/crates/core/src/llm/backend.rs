use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

/// Failure of a single request. `detail` never contains credentials.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("rate limited (status 429): {0}")]
    RateLimited(String),
    #[error("server error (status {status}): {detail}")]
    Server { status: u16, detail: String },
    #[error("connection failed: {0}")]
    Transport(String),
    #[error("authentication failed (status {status}): {detail}")]
    Auth { status: u16, detail: String },
    #[error("request rejected (status {status}): {detail}")]
    BadRequest { status: u16, detail: String },
    #[error("unexpected response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Timeout(_)
                | BackendError::RateLimited(_)
                | BackendError::Server { .. }
                | BackendError::Transport(_)
        )
    }

    pub fn from_status(status: u16, detail: String) -> Self {
        match status {
            401 | 403 => BackendError::Auth { status, detail },
            408 => BackendError::Timeout(detail),
            429 => BackendError::RateLimited(detail),
            500..=599 => BackendError::Server { status, detail },
            _ => BackendError::BadRequest { status, detail },
        }
    }
}

/// Something that answers a chat request with the assistant's text.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiBackend {
    url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("url", &self.url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl OpenAiBackend {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    fn scrub(&self, text: &str) -> String {
        let mut text: String = text.chars().take(500).collect();
        if !self.api_key.is_empty() {
            text = text.replace(&self.api_key, "<redacted>");
        }
        text
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

fn error_detail(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .and_then(|m| m.as_str())
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.trim().to_string())
}

impl ChatBackend for OpenAiBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let result = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body);
        let mut resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Timeout(_)) => return Err(BackendError::Timeout(self.url.clone())),
            Err(e) => return Err(BackendError::Transport(self.scrub(&e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.url.clone()),
            other => BackendError::Transport(self.scrub(&other.to_string())),
        })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::from_status(
                status,
                self.scrub(&error_detail(&text)),
            ));
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::InvalidResponse("no message content in first choice".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert!(BackendError::from_status(429, String::new()).is_retryable());
        assert!(BackendError::from_status(503, String::new()).is_retryable());
        assert!(BackendError::from_status(408, String::new()).is_retryable());
        assert!(!BackendError::from_status(401, String::new()).is_retryable());
        assert!(!BackendError::from_status(400, String::new()).is_retryable());
        assert!(matches!(
            BackendError::from_status(403, String::new()),
            BackendError::Auth { .. }
        ));
    }

    #[test]
    fn debug_hides_key() {
        let b = OpenAiBackend::new("http://localhost:1", "sk-secret", Duration::from_secs(1));
        assert!(!format!("{b:?}").contains("sk-secret"));
        assert_eq!(b.scrub("bad key sk-secret here"), "bad key <redacted> here");
    }

    #[test]
    fn error_detail_prefers_api_message() {
        assert_eq!(
            error_detail(r#"{"error":{"message":"Invalid model"}}"#),
            "Invalid model"
        );
        assert_eq!(error_detail("plain text\n"), "plain text");
    }
}
