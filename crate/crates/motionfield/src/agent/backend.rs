//! Chat backends. A backend takes an ordered message list (text plus
//! optional image attachments) and returns the assistant's text. Two
//! implementations: a scripted mock that replays canned responses in order,
//! and an HTTP client speaking the common chat-completion shape with
//! bearer-token auth.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "AGENT_ENDPOINT";
pub const ENV_API_KEY: &str = "AGENT_API_KEY";
pub const ENV_MODEL: &str = "AGENT_MODEL";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Separator between responses in a mock script file.
pub const SCRIPT_SEPARATOR: &str = "---";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("mock script exhausted after {consumed} responses")]
    ScriptExhausted { consumed: usize },
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("bad backend descriptor {0:?}; expected mock:FILE or an http(s) URL")]
    BadDescriptor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageAttachment {
    pub media_type: &'static str,
    pub base64_data: String,
}

impl ImageAttachment {
    pub fn png_from_bytes(bytes: &[u8]) -> Self {
        Self {
            media_type: "image/png",
            base64_data: BASE64.encode(bytes),
        }
    }

    pub fn png_from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::png_from_bytes(&fs::read(path)?))
    }

    fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.base64_data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub images: Vec<ImageAttachment>,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            images: Vec::new(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            images: Vec::new(),
        }
    }

    pub fn with_images(mut self, images: Vec<ImageAttachment>) -> Self {
        self.images = images;
        self
    }
}

pub trait ChatBackend {
    fn send(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError>;
    /// Stable identifier for provenance records, e.g. `mock:script.txt`.
    fn descriptor(&self) -> String;
}

/// Replays a fixed response list in order; requests beyond the script fail.
#[derive(Debug, Clone)]
pub struct MockBackend {
    responses: Vec<String>,
    cursor: usize,
    source: String,
}

impl MockBackend {
    /// Split a script into responses at lines that are exactly `---`.
    pub fn from_script_text(text: &str, source: &str) -> Self {
        let mut responses = Vec::new();
        let mut current = String::new();
        for line in text.lines() {
            if line.trim_end_matches('\r') == SCRIPT_SEPARATOR {
                if !current.trim().is_empty() {
                    responses.push(current.trim().to_string());
                }
                current.clear();
            } else {
                current.push_str(line);
                current.push('\n');
            }
        }
        if !current.trim().is_empty() {
            responses.push(current.trim().to_string());
        }
        Self {
            responses,
            cursor: 0,
            source: source.to_string(),
        }
    }

    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        Ok(Self::from_script_text(
            &fs::read_to_string(path)?,
            &path.display().to_string(),
        ))
    }

    pub fn from_responses(responses: Vec<String>) -> Self {
        Self {
            responses,
            cursor: 0,
            source: "inline".to_string(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.cursor
    }
}

impl ChatBackend for MockBackend {
    fn send(&mut self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let response = self
            .responses
            .get(self.cursor)
            .ok_or(BackendError::ScriptExhausted {
                consumed: self.cursor,
            })?
            .clone();
        self.cursor += 1;
        Ok(response)
    }

    fn descriptor(&self) -> String {
        format!("mock:{}", self.source)
    }
}

/// Chat-completion client: POSTs `{model?, messages}` JSON with a bearer
/// token and reads `choices[0].message.content` back.
pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    model: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &str, api_key: &str, model: Option<String>) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            model,
            agent: ureq::AgentBuilder::new()
                .timeout(DEFAULT_TIMEOUT)
                .build(),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| BackendError::MissingEnv(ENV_ENDPOINT))?;
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| BackendError::MissingEnv(ENV_API_KEY))?;
        let model = std::env::var(ENV_MODEL).ok();
        Ok(Self::new(&endpoint, &api_key, model))
    }
}

/// The request body for a message list, in the chat-completion shape.
pub fn build_request_body(messages: &[ChatMessage], model: Option<&str>) -> Value {
    let rendered: Vec<Value> = messages
        .iter()
        .map(|m| {
            let content = if m.images.is_empty() {
                Value::String(m.content.clone())
            } else {
                let mut parts = vec![json!({ "type": "text", "text": m.content })];
                for image in &m.images {
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": { "url": image.data_url() },
                    }));
                }
                Value::Array(parts)
            };
            json!({ "role": m.role.as_str(), "content": content })
        })
        .collect();
    let mut body = json!({ "messages": rendered });
    if let Some(model) = model {
        body["model"] = Value::String(model.to_string());
    }
    body
}

/// Pull the assistant text out of a chat-completion response body.
pub fn extract_content(body: &Value) -> Result<String, BackendError> {
    body["choices"][0]["message"]["content"]
        .as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| {
            BackendError::MalformedResponse(
                "no choices[0].message.content string in the response".to_string(),
            )
        })
}

impl ChatBackend for HttpBackend {
    fn send(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = build_request_body(messages, self.model.as_deref());
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match response {
            Ok(resp) => {
                let value: Value = resp
                    .into_json()
                    .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                extract_content(&value)
            }
            Err(ureq::Error::Status(status, resp)) => Err(BackendError::Http {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }

    fn descriptor(&self) -> String {
        self.endpoint.clone()
    }
}

/// Build a backend from a descriptor: `mock:FILE` or an http(s) endpoint
/// (credentials from the environment).
pub fn backend_from_descriptor(descriptor: &str) -> Result<Box<dyn ChatBackend>, BackendError> {
    if let Some(path) = descriptor.strip_prefix("mock:") {
        Ok(Box::new(MockBackend::from_script_file(path)?))
    } else if descriptor.starts_with("http://") || descriptor.starts_with("https://") {
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| BackendError::MissingEnv(ENV_API_KEY))?;
        let model = std::env::var(ENV_MODEL).ok();
        Ok(Box::new(HttpBackend::new(descriptor, &api_key, model)))
    } else {
        Err(BackendError::BadDescriptor(descriptor.to_string()))
    }
}
