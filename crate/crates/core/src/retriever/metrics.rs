//! NDCG@k, MRR@k and hit-style Recall@k over graded relevance judgments.
//!
//! Gain is linear in the grade. Ids absent from the judgments have grade 0.
//! Repeated ids in a ranking only count at their first position.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::CorpusRecord;
use crate::Scalar;

/// Graded relevance of reference ids for one query (one `qrels.jsonl` row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgments {
    pub query_id: String,
    pub graded: BTreeMap<String, u32>,
}

impl RelevanceJudgments {
    pub fn new<I, S>(query_id: impl Into<String>, graded: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        RelevanceJudgments {
            query_id: query_id.into(),
            graded: graded.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn grade(&self, id: &str) -> u32 {
        self.graded.get(id).copied().unwrap_or(0)
    }
}

impl CorpusRecord for RelevanceJudgments {
    const KIND: &'static str = "qrels";

    fn id(&self) -> &str {
        &self.query_id
    }

    fn validate(&self) -> Result<(), String> {
        if self.query_id.is_empty() {
            Err("query_id is empty".into())
        } else {
            Ok(())
        }
    }
}

/// Grades of the first `k` distinct ids of `ranked_ids`.
fn top_k_grades<S: AsRef<str>>(
    ranked_ids: &[S],
    judgments: &RelevanceJudgments,
    k: usize,
) -> Vec<u32> {
    let mut seen = HashSet::new();
    ranked_ids
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| seen.insert(*id))
        .take(k)
        .map(|id| judgments.grade(id))
        .collect()
}

fn dcg<T: Scalar>(grades: impl IntoIterator<Item = u32>) -> T {
    grades
        .into_iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, g)| {
            let discount = <T as Scalar>::from_usize(i + 2).log2();
            acc + <T as Scalar>::from_usize(g as usize) / discount
        })
}

/// `DCG@k / IDCG@k`; zero when no id has a positive grade.
pub fn ndcg_at_k<T: Scalar, S: AsRef<str>>(
    ranked_ids: &[S],
    judgments: &RelevanceJudgments,
    k: usize,
) -> T {
    let mut ideal: Vec<u32> = judgments
        .graded
        .values()
        .copied()
        .filter(|g| *g > 0)
        .collect();
    if ideal.is_empty() || k == 0 {
        return T::zero();
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    ideal.truncate(k);
    let idcg: T = dcg(ideal);
    let value: T = dcg(top_k_grades(ranked_ids, judgments, k));
    (value / idcg).min(T::one())
}

/// Reciprocal rank of the first relevant id within the top `k`, else zero.
pub fn mrr_at_k<T: Scalar, S: AsRef<str>>(
    ranked_ids: &[S],
    judgments: &RelevanceJudgments,
    k: usize,
) -> T {
    top_k_grades(ranked_ids, judgments, k)
        .iter()
        .position(|g| *g > 0)
        .map_or(T::zero(), |pos| {
            T::one() / <T as Scalar>::from_usize(pos + 1)
        })
}

/// 1 when any relevant id appears within the top `k`, else 0.
pub fn recall_at_k<T: Scalar, S: AsRef<str>>(
    ranked_ids: &[S],
    judgments: &RelevanceJudgments,
    k: usize,
) -> T {
    if top_k_grades(ranked_ids, judgments, k)
        .iter()
        .any(|g| *g > 0)
    {
        T::one()
    } else {
        T::zero()
    }
}

/// Corpus means of the three metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores<T = crate::Real> {
    pub ndcg: T,
    pub mrr: T,
    pub recall: T,
}

impl<T: Scalar> RetrievalScores<T> {
    /// Averages over `(ranking, judgments)` pairs; zero for an empty input.
    pub fn mean<S: AsRef<str>>(runs: &[(Vec<S>, &RelevanceJudgments)], k: usize) -> Self {
        let zero = RetrievalScores {
            ndcg: T::zero(),
            mrr: T::zero(),
            recall: T::zero(),
        };
        if runs.is_empty() {
            return zero;
        }
        let n = <T as Scalar>::from_usize(runs.len());
        let sum = runs.iter().fold(zero, |acc, (ranked, j)| RetrievalScores {
            ndcg: acc.ndcg + ndcg_at_k::<T, S>(ranked, j, k),
            mrr: acc.mrr + mrr_at_k::<T, S>(ranked, j, k),
            recall: acc.recall + recall_at_k::<T, S>(ranked, j, k),
        });
        RetrievalScores {
            ndcg: sum.ndcg / n,
            mrr: sum.mrr / n,
            recall: sum.recall / n,
        }
    }
}
