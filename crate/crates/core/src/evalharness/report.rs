use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{EvalOutcome, RunTrace, TerminationReason};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub sample_id: String,
    pub outcome: EvalOutcome,
    pub termination_reason: TerminationReason,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub ndcg3: Real,
    pub mrr3: Real,
    pub recall3: Real,
}

/// Corpus-level SV/CR/TPR, each a percentage rounded to one decimal.
///
/// `tpr_pct` counts samples whose best candidate passed every test (at least
/// one). `tpr_fraction_pct` is the mean per-sample fraction of passed tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub sv_pct: Real,
    pub cr_pct: Real,
    pub tpr_pct: Real,
    pub tpr_fraction_pct: Real,
    pub per_sample: Vec<SampleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalSummary>,
}

pub fn round1(x: Real) -> Real {
    (x * 10.0).round() / 10.0
}

fn pct(count: usize, n: usize) -> Real {
    if n == 0 {
        0.0
    } else {
        round1(100.0 * count as Real / n as Real)
    }
}

/// Scores each trace by its best candidate. Samples without a trace (when
/// `n_samples` exceeds the trace count) count as failures on every metric.
pub fn compute_report(traces: &[RunTrace], n_samples: usize) -> EvalReport {
    let n = n_samples.max(traces.len());
    let mut per_sample: Vec<SampleSummary> = traces
        .iter()
        .map(|t| SampleSummary {
            sample_id: t.sample_id.clone(),
            outcome: t.best().outcome.clone(),
            termination_reason: t.termination_reason,
            iterations: t.iterations(),
        })
        .collect();
    per_sample.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let valid = per_sample
        .iter()
        .filter(|s| s.outcome.structurally_valid)
        .count();
    let compiled = per_sample.iter().filter(|s| s.outcome.compiled).count();
    let all_pass = per_sample
        .iter()
        .filter(|s| s.outcome.is_full_success())
        .count();
    let fraction_sum: Real = per_sample
        .iter()
        .filter(|s| s.outcome.compiled && s.outcome.tests_total > 0)
        .map(|s| s.outcome.tests_passed as Real / s.outcome.tests_total as Real)
        .sum();

    EvalReport {
        n_samples: n,
        sv_pct: pct(valid, n),
        cr_pct: pct(compiled, n),
        tpr_pct: pct(all_pass, n),
        tpr_fraction_pct: if n == 0 {
            0.0
        } else {
            round1(100.0 * fraction_sum / n as Real)
        },
        per_sample,
        retrieval: None,
    }
}

pub fn render_report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_report_markdown(report: &EvalReport) -> String {
    let mut s = String::new();
    s.push_str(
        "| Samples | Structural Validity (%) | Compilation Rate (%) | Test Pass Rate (%) |\n",
    );
    s.push_str("|---:|---:|---:|---:|\n");
    let _ = writeln!(
        s,
        "| {} | {:.1} | {:.1} | {:.1} |",
        report.n_samples, report.sv_pct, report.cr_pct, report.tpr_pct
    );
    let _ = writeln!(
        s,
        "\nMean per-sample test fraction: {:.1}%",
        report.tpr_fraction_pct
    );
    if let Some(r) = &report.retrieval {
        let _ = writeln!(
            s,
            "\nRetrieval: NDCG@3 {:.3}, MRR@3 {:.3}, Recall@3 {:.3}",
            r.ndcg3, r.mrr3, r.recall3
        );
    }
    if !report.per_sample.is_empty() {
        s.push_str("\n| Sample | Valid | Compiled | Tests passed | Termination | Iterations |\n");
        s.push_str("|---|:-:|:-:|---:|---|---:|\n");
        for p in &report.per_sample {
            let yn = |b: bool| if b { "yes" } else { "no" };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {}/{} | {} | {} |",
                p.sample_id,
                yn(p.outcome.structurally_valid),
                yn(p.outcome.compiled),
                p.outcome.tests_passed,
                p.outcome.tests_total,
                p.termination_reason.as_str(),
                p.iterations
            );
        }
    }
    s
}
