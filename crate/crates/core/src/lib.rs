//! Multi-agent, API-aware PL/SQL to Java translation.
//!
//! The pipeline retrieves similar PL/SQL→Java exemplars, asks a chat model for an
//! initial translation, evaluates it in a compile/test sandbox and, only when that
//! fails, shortlists framework APIs from a knowledge base and iterates a
//! compiler-feedback refinement loop.
//!
//! Every model call goes through the traits in [`provider`], so the whole
//! pipeline runs offline against [`provider::ScriptedProvider`] and
//! [`provider::HashingEmbedder`].
//!
//! Numeric code (similarity, ranking metrics) is generic over [`Scalar`];
//! corpus records store embeddings as [`Embedding`] (`f64`).

pub mod agents;
pub mod apikb;
pub mod cli;
pub mod evalharness;
pub mod java;
pub mod model;
pub mod provider;
pub mod retriever;
pub mod scalar;

pub use scalar::Scalar;

/// Concrete scalar used by persisted corpora and reports.
pub type Real = f64;

/// Dense embedding as stored in `references.jsonl`.
pub type Embedding = Vec<Real>;

/// Single-precision scalar, handy for large provider embeddings.
pub type RealF32 = f32;

pub use agents::{run_pipeline, PipelineRun, Providers};
pub use apikb::{extract_api_entries, generate_descriptions, render_kb_digest, ApiEntry};
pub use evalharness::{check_structural_validity, compute_report, EvalReport};
pub use model::{
    Candidate, Diagnostic, EvalOutcome, PipelineConfig, ReferencePair, RunTrace, SampleUnit,
    Severity, SourceAgent, TerminationReason,
};
pub use retriever::{cosine_similarity, mrr_at_k, ndcg_at_k, recall_at_k, retrieve_top_k};
