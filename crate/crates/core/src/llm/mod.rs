//! Everything that talks to a language model: topic naming, keyword
//! extraction, retrieval-augmented answers, topic identification and topic
//! comparison.
//!
//! Providers implement [`LlmProvider`]. [`Llm`] wraps a provider with request
//! ids and logging. Each operation degrades to a deterministic fallback when
//! the provider fails, except [`compare_topics`], which has nothing to fall
//! back on.

mod mock;
pub mod prompts;
mod remote;
mod tasks;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;

pub use mock::{MockProvider, MockRule};
pub use remote::{parse_response, RemoteChatProvider};
pub use tasks::{
    answer_question, clean_title, compare_topics, extract_query_keywords, identify_topic,
    limit_sentences, name_and_describe, parse_keywords, parse_naming, truncate_chars, Answer,
    IdentifiedTopic, IdentifySource, Naming, DEFAULT_ANSWER_K, DOC_CHAR_BUDGET, MAX_KEYWORDS,
    MAX_TITLE_WORDS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("language model provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed language model response: {0}")]
    MalformedResponse(String),
    #[error("no mock script rule matches the request")]
    NoScriptMatch,
    #[error("invalid language model configuration: {0}")]
    InvalidConfig(String),
    #[error("topic index {index} out of range for {topics} topics")]
    InvalidTopicIndex { index: usize, topics: usize },
    #[error("cannot compare a topic with itself")]
    SameTopic,
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    FunctionResult,
}

impl Role {
    pub fn wire_name(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::FunctionResult => "function",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    pub arguments: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_call: Option<FunctionCall>,
    /// Name of the function whose result this message carries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            function_call: None,
            name: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_call(call: FunctionCall) -> Self {
        ChatMessage {
            function_call: Some(call),
            ..Self::plain(Role::Assistant, "")
        }
    }

    pub fn function_result(name: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            name: Some(name.to_string()),
            ..Self::plain(Role::FunctionResult, content)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDeclaration {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub functions: Vec<FunctionDeclaration>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            messages,
            functions: Vec::new(),
        }
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatResponse {
    Text(String),
    FunctionCall(FunctionCall),
}

pub trait LlmProvider: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmProviderKind {
    RemoteChat,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmProviderConfig {
    pub kind: LlmProviderKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_concurrency: usize,
    /// JSON rule table for the mock provider.
    pub mock_script_path: Option<PathBuf>,
}

impl Default for LlmProviderConfig {
    fn default() -> Self {
        Self {
            kind: LlmProviderKind::RemoteChat,
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            request_timeout_secs: 60,
            max_concurrency: 4,
            mock_script_path: None,
        }
    }
}

impl LlmProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig(
                "temperature must be finite and non-negative".into(),
            ));
        }
        if self.max_output_tokens == 0
            || self.request_timeout_secs == 0
            || self.max_concurrency == 0
        {
            return Err(LlmError::InvalidConfig(
                "max_output_tokens, request_timeout_secs and max_concurrency must be positive"
                    .into(),
            ));
        }
        if self.kind == LlmProviderKind::Mock && self.mock_script_path.is_none() {
            return Err(LlmError::InvalidConfig(
                "the mock provider requires mock_script_path".into(),
            ));
        }
        Ok(())
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LlmProvider>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            LlmProviderKind::Mock => Arc::new(MockProvider::from_file(
                self.mock_script_path.as_deref().expect("validated"),
            )?),
            LlmProviderKind::RemoteChat => {
                let key = std::env::var(&self.api_key_env_var).map_err(|_| {
                    LlmError::InvalidConfig(format!(
                        "environment variable {} is not set",
                        self.api_key_env_var
                    ))
                })?;
                Arc::new(RemoteChatProvider::new(
                    self.endpoint_url.clone(),
                    self.model_name.clone(),
                    key,
                    self.temperature,
                    self.max_output_tokens,
                    Duration::from_secs(self.request_timeout_secs),
                ))
            }
        })
    }
}

/// A provider plus request numbering and logging. Cheap to clone.
#[derive(Clone)]
pub struct Llm {
    provider: Arc<dyn LlmProvider>,
    next_id: Arc<AtomicU64>,
    max_concurrency: usize,
}

impl std::fmt::Debug for Llm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Llm")
            .field("model", &self.provider.model_name())
            .field("requests", &self.requests_sent())
            .finish()
    }
}

impl Llm {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        Llm {
            provider,
            next_id: Arc::new(AtomicU64::new(0)),
            max_concurrency: 4,
        }
    }

    pub fn from_config(cfg: &LlmProviderConfig) -> Result<Self, LlmError> {
        Ok(Self::new(cfg.build_provider()?).with_max_concurrency(cfg.max_concurrency))
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }

    pub fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }

    pub fn model_name(&self) -> &str {
        self.provider.model_name()
    }

    pub fn requests_sent(&self) -> u64 {
        self.next_id.load(Ordering::SeqCst)
    }

    pub fn send(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        tracing::debug!(
            request_id = id,
            model = self.provider.model_name(),
            functions = req.functions.len(),
            prompt = req.last_user_content(),
            "llm request"
        );
        let result = self.provider.complete(req);
        match &result {
            Ok(resp) => tracing::debug!(request_id = id, response = ?resp, "llm response"),
            Err(e) => tracing::warn!(request_id = id, error = %e, "llm request failed"),
        }
        result
    }

    /// Sends a request that expects plain text.
    pub fn text(&self, req: &ChatRequest) -> Result<String, LlmError> {
        match self.send(req)? {
            ChatResponse::Text(t) => Ok(t),
            ChatResponse::FunctionCall(c) => Err(LlmError::MalformedResponse(format!(
                "expected text, got a call to {}",
                c.name
            ))),
        }
    }
}
