//! Example retrieval: top-k reference pairs by cosine similarity of dense
//! embeddings, plus the ranking metrics used to judge retrieval quality.

mod metrics;

use std::cmp::Ordering;

use thiserror::Error;

use crate::model::{ReferencePair, SampleUnit};
use crate::provider::{Embedder, ProviderError};
use crate::{Real, Scalar};

pub use metrics::{mrr_at_k, ndcg_at_k, recall_at_k, RelevanceJudgments, RetrievalScores};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("reference set is empty")]
    EmptyReferences,
    #[error("k must be positive")]
    InvalidK,
    #[error("reference {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// One retrieved exemplar with its similarity and 1-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedExemplar {
    pub pair: ReferencePair,
    pub score: Real,
    pub rank: usize,
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(RetrievalError::ZeroVector);
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}

/// Ranks `items` by descending cosine similarity to `query`, ties broken by
/// ascending id, and keeps the first `k`. Returns `(item index, score)` pairs.
pub fn rank_by_cosine<T, S>(
    query: &[T],
    items: &[(S, &[T])],
    k: usize,
) -> Result<Vec<(usize, T)>, RetrievalError>
where
    T: Scalar,
    S: AsRef<str>,
{
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let mut scored = items
        .iter()
        .enumerate()
        .map(|(i, (_, v))| cosine_similarity(query, v).map(|s| (i, s)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|(ia, sa), (ib, sb)| {
        sb.partial_cmp(sa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| items[*ia].0.as_ref().cmp(items[*ib].0.as_ref()))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Fills in missing reference embeddings. Returns how many were computed.
pub fn ensure_embeddings<E: Embedder + ?Sized>(
    refs: &mut [ReferencePair],
    embedder: &E,
) -> Result<usize, RetrievalError> {
    let mut computed = 0;
    for r in refs.iter_mut() {
        if r.embedding.is_none() {
            r.embedding = Some(embedder.embed(&r.plsql_source)?.values);
            computed += 1;
        }
    }
    let mut dims = refs
        .iter()
        .filter_map(|r| r.embedding.as_ref().map(Vec::len));
    if let Some(first) = dims.next() {
        if let Some(other) = dims.find(|d| *d != first) {
            return Err(RetrievalError::DimensionMismatch(first, other));
        }
        if let Some(declared) = embedder.dimension() {
            if declared != first {
                return Err(RetrievalError::DimensionMismatch(declared, first));
            }
        }
    }
    Ok(computed)
}

/// Top-k references for an already-embedded query. Every reference must carry
/// an embedding.
pub fn rank_references(
    query: &[Real],
    refs: &[ReferencePair],
    k: usize,
) -> Result<Vec<RetrievedExemplar>, RetrievalError> {
    if refs.is_empty() {
        return Err(RetrievalError::EmptyReferences);
    }
    let items = refs
        .iter()
        .map(|r| {
            r.embedding
                .as_deref()
                .map(|e| (r.id.as_str(), e))
                .ok_or_else(|| RetrievalError::MissingEmbedding(r.id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rank_by_cosine(query, &items, k)?
        .into_iter()
        .enumerate()
        .map(|(pos, (i, score))| RetrievedExemplar {
            pair: refs[i].clone(),
            score,
            rank: pos + 1,
        })
        .collect())
}

/// `D_k = R(D, s_t)`: embeds the query, caches missing reference embeddings in
/// place and returns the `min(k, |refs|)` most similar pairs.
pub fn retrieve_top_k<E: Embedder + ?Sized>(
    query: &SampleUnit,
    refs: &mut [ReferencePair],
    k: usize,
    embedder: &E,
) -> Result<Vec<RetrievedExemplar>, RetrievalError> {
    if refs.is_empty() {
        return Err(RetrievalError::EmptyReferences);
    }
    ensure_embeddings(refs, embedder)?;
    let q = embedder.embed(&query.plsql_source)?;
    rank_references(&q.values, refs, k)
}
