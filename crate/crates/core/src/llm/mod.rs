//! Chat-completion clients, prompt templates, and answer extraction.

mod extract;
mod mock;
mod openai;
mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_smiles;
pub use mock::{MockBook, MockClient, MockScript};
pub use openai::{OpenAiClient, OpenAiConfig, TokenBucket};
pub use templates::{render, template, Binding, Bindings, PromptTemplate, Rendered, DEFAULT_CHAR_BUDGET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("template {template} is missing a binding for {{{name}}}")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("no parseable SMILES answer found")]
    NoAnswerFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Init,
    Critique,
    Rewrite,
    Describe,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] =
        [TemplateId::Init, TemplateId::Critique, TemplateId::Rewrite, TemplateId::Describe];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Init => "init",
            TemplateId::Critique => "critique",
            TemplateId::Rewrite => "rewrite",
            TemplateId::Describe => "describe",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image { media_type: String, data_base64: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> ChatMessage {
        ChatMessage { role, parts: vec![Part::Text { text: text.into() }] }
    }

    pub fn system(text: impl Into<String>) -> ChatMessage {
        ChatMessage::text(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> ChatMessage {
        ChatMessage::text(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> ChatMessage {
        ChatMessage::text(Role::Assistant, text)
    }

    /// Appends an image part from raw bytes.
    pub fn with_image(mut self, media_type: impl Into<String>, bytes: &[u8]) -> ChatMessage {
        use base64::Engine;
        self.parts.push(Part::Image {
            media_type: media_type.into(),
            data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        });
        self
    }

    /// Concatenated text parts.
    pub fn text_content(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.parts.is_empty() {
            return Err(LlmError::InvalidRequest("message has no parts".into()));
        }
        if self.role != Role::User && self.parts.iter().any(|p| matches!(p, Part::Image { .. })) {
            return Err(LlmError::InvalidRequest("image parts are only allowed in user messages".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams { model: "gpt-4o-mini".into(), temperature: 0.0, top_p: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// `None` when the endpoint does not report usage.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub model: String,
    pub latency_ms: u64,
    pub retries: u32,
}

impl ChatResponse {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens.unwrap_or(0) + self.completion_tokens.unwrap_or(0)
    }
}

/// Which prompt a call belongs to; the mock keys its script on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub template: TemplateId,
}

pub trait ChatClient: Send + Sync {
    fn chat(&self, messages: &[ChatMessage], params: &ChatParams, ctx: CallContext) -> Result<ChatResponse, LlmError>;
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn chat(&self, messages: &[ChatMessage], params: &ChatParams, ctx: CallContext) -> Result<ChatResponse, LlmError> {
        (**self).chat(messages, params, ctx)
    }
}

fn validate_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    if messages.is_empty() {
        return Err(LlmError::InvalidRequest("no messages".into()));
    }
    messages.iter().try_for_each(ChatMessage::validate)
}
