//! Chat-completion and embedding access.
//!
//! Agents only see [`ChatProvider`] and [`Embedder`]. Three implementations ship:
//! [`OpenAiCompatProvider`] talks to an OpenAI-compatible REST endpoint,
//! [`ScriptedProvider`] replays canned completions and [`HashingEmbedder`]
//! produces deterministic bag-of-words embeddings without a network.

mod hashing;
mod http;
mod scripted;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Embedding;

pub(crate) use hashing::word_tokens;
pub use hashing::HashingEmbedder;
pub use http::{OpenAiCompatProvider, API_KEY_ENV};
pub use scripted::ScriptedProvider;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP error status {0}")]
    HttpError(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("scripted provider has no remaining response for {0}")]
    ProviderExhausted(String),
    #[error("malformed script: {0}")]
    MalformedScript(String),
    #[error("empty input text")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension {got} does not match declared dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
}

/// Which agent is calling. Scripted providers keep one response queue per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Initial,
    Grounding,
    Refinement,
    Describe,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Initial,
        AgentRole::Grounding,
        AgentRole::Refinement,
        AgentRole::Describe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Initial => "initial",
            AgentRole::Grounding => "grounding",
            AgentRole::Refinement => "refinement",
            AgentRole::Describe => "describe",
        }
    }

    pub fn parse(tag: &str) -> Option<AgentRole> {
        AgentRole::ALL.into_iter().find(|r| r.as_str() == tag)
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Who is asking: the agent role and, inside a pipeline run, the sample id.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub role: AgentRole,
    pub sample_id: Option<&'a str>,
}

impl<'a> CallContext<'a> {
    pub fn new(role: AgentRole) -> Self {
        CallContext {
            role,
            sample_id: None,
        }
    }

    pub fn for_sample(role: AgentRole, sample_id: &'a str) -> Self {
        CallContext {
            role,
            sample_id: Some(sample_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
}

impl ChatRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        ChatRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.user_text.is_empty() {
            return Err(ProviderError::InvalidRequest("user_text is empty".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Decoding settings shared by every request of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
}

impl Default for RequestSettings {
    fn default() -> Self {
        RequestSettings {
            temperature: 0.0,
            max_output_tokens: 4096,
            timeout: Duration::from_secs(120),
        }
    }
}

impl RequestSettings {
    pub fn from_config(cfg: &crate::model::PipelineConfig) -> Self {
        RequestSettings {
            temperature: cfg.temperature,
            max_output_tokens: cfg.max_output_tokens,
            timeout: Duration::from_secs_f64(cfg.request_timeout),
        }
    }

    pub fn request(
        &self,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
    ) -> ChatRequest {
        ChatRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            timeout: self.timeout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    Truncated,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub model_id: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Embedding,
    pub model_id: String,
}

pub trait ChatProvider: Send + Sync {
    fn chat(&self, ctx: &CallContext<'_>, req: &ChatRequest)
        -> Result<ChatResponse, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Declared output dimension, when known up front.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn chat(
        &self,
        ctx: &CallContext<'_>,
        req: &ChatRequest,
    ) -> Result<ChatResponse, ProviderError> {
        (**self).chat(ctx, req)
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        (**self).embed(text)
    }
}

/// Checks the embedding invariants: finite values and the declared length.
pub(crate) fn check_embedding(
    values: &[f64],
    declared: Option<usize>,
) -> Result<(), ProviderError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ProviderError::NonFinite);
    }
    if let Some(expected) = declared {
        if values.len() != expected {
            return Err(ProviderError::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
    }
    Ok(())
}
