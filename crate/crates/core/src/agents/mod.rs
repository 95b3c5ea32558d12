//! The three agents and the run loop that ties them together.
//!
//! * initial translation: retrieved exemplars + architecture description + PL/SQL
//! * API grounding: one shortlist of knowledge-base entries per sample, only
//!   when the initial candidate is not a full success
//! * refinement: rewrite the latest candidate from its diagnostics and the
//!   shortlisted APIs until success, no progress, or the iteration cap

mod grounding;
mod pipeline;
mod prompt;
mod refine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalharness::HarnessError;
use crate::provider::{AgentRole, ChatProvider, Embedder, ProviderError};
use crate::retriever::RetrievalError;

pub use grounding::{fallback_shortlist, ground_apis, overlap_score, Shortlist, FALLBACK_LIMIT};
pub use pipeline::{run_pipeline, PipelineInputs, PipelineRun};
pub use prompt::{assemble_initial_prompt, extract_code_block, translate_initial, PromptBundle};
pub use refine::{refine_once, refinement_prompt, MAX_DIAGNOSTICS, MAX_DIAGNOSTIC_CHARS};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("model response contained no code")]
    EmptyTranslation,
    #[error("architecture description is empty")]
    EmptyArchitectureDescription,
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Chat and embedding handles used by one run.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn Embedder,
}

/// One prompt/response pair, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: AgentRole,
    pub iteration: u32,
    pub system_text: String,
    pub user_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything sent to and received from the models for one sample
/// (`<id>.prompts.json`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptLog {
    pub sample_id: String,
    /// `(reference id, cosine score)` of the retrieved exemplars, in rank order.
    pub exemplars: Vec<(String, f64)>,
    pub exchanges: Vec<Exchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortlist: Option<Shortlist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PromptLog {
    pub fn new(sample_id: impl Into<String>) -> Self {
        PromptLog {
            sample_id: sample_id.into(),
            ..Default::default()
        }
    }
}
