//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use legacy_translate::agents::{run_pipeline, PipelineInputs, Providers};
use legacy_translate::apikb::{extract_api_entries, ApiEntry};
use legacy_translate::evalharness::{
    check_structural_validity, compute_report, CandidateEvaluator, HarnessError, SandboxEvaluator,
};
use legacy_translate::model::{
    load_jsonl_corpus, read_run_traces, write_jsonl_corpus, Candidate, Diagnostic, EvalOutcome,
    PipelineConfig, ReferencePair, RunTrace, SampleUnit, SourceAgent, TerminationReason,
};
use legacy_translate::provider::{AgentRole, HashingEmbedder, ScriptedProvider};
use legacy_translate::retriever::{
    mrr_at_k, ndcg_at_k, recall_at_k, retrieve_top_k, RelevanceJudgments,
};

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if let false = $cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric arithmetic", c1_metric_arithmetic),
        ("retrieval oracle", c2_retrieval_oracle),
        ("ranking-metric oracles", c3_ranking_metrics),
        ("extraction golden", c4_extraction_golden),
        ("pipeline state machine", c5_state_machine),
        ("structural validity", c6_structural_validity),
        ("end-to-end offline run", c7_end_to_end),
        ("concurrency determinism", c8_concurrency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn outcome(valid: bool, compiled: bool, total: u32, passed: u32) -> EvalOutcome {
    EvalOutcome {
        structurally_valid: valid,
        compiled,
        tests_total: total,
        tests_passed: passed,
        diagnostics: vec![],
    }
}

fn single_trace(i: usize, o: EvalOutcome) -> RunTrace {
    RunTrace {
        sample_id: format!("t{i:03}"),
        candidates: vec![Candidate {
            iteration: 0,
            source_agent: SourceAgent::Initial,
            java_code: "class A {}".into(),
            outcome: o,
        }],
        shortlist: vec![],
        termination_reason: TerminationReason::IterationCap,
        best_index: 0,
    }
}

/// `n` traces with the first `valid` structurally valid, the first `compiled`
/// compiling and the first `pass` passing all of their 4 tests.
fn encoded(n: usize, valid: usize, compiled: usize, pass: usize) -> Vec<RunTrace> {
    (0..n)
        .map(|i| {
            let c = i < compiled;
            single_trace(
                i,
                outcome(
                    i < valid,
                    c,
                    4,
                    if i < pass {
                        4
                    } else if c {
                        1
                    } else {
                        0
                    },
                ),
            )
        })
        .collect()
}

fn c1_metric_arithmetic() -> Check {
    let start = Instant::now();
    let rows = [
        ((68, 68, 36, 23), (100.0, 52.9, 33.8)),
        ((68, 67, 31, 21), (98.5, 45.6, 30.9)),
    ];
    let mut shown = Vec::new();
    for ((n, v, c, p), (sv, cr, tpr)) in rows {
        let r = compute_report(&encoded(n, v, c, p), n);
        for (got, want) in [(r.sv_pct, sv), (r.cr_pct, cr), (r.tpr_pct, tpr)] {
            ensure!(
                (got - want).abs() <= 0.05,
                "{v}/{c}/{p}: got {got}, want {want}"
            );
        }
        shown.push(format!("{:.1}/{:.1}/{:.1}", r.sv_pct, r.cr_pct, r.tpr_pct));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{} in {elapsed:.2?}", shown.join(" and ")))
}

// ---------------------------------------------------------------- 2

const VOCAB: &[&str] = &[
    "select",
    "insert",
    "update",
    "delete",
    "cursor",
    "loop",
    "account",
    "balance",
    "ledger",
    "commit",
    "rollback",
    "exception",
    "varchar2",
    "number",
    "procedure",
    "function",
    "begin",
    "end",
    "into",
    "from",
    "where",
    "store",
    "audit",
    "date",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..8);
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).fold(0.0, |s, v| s + v);
    let na: f64 = a.iter().map(|x| x * x).fold(0.0, |s, v| s + v);
    let nb: f64 = b.iter().map(|x| x * x).fold(0.0, |s, v| s + v);
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn c2_retrieval_oracle() -> Check {
    use legacy_translate::provider::Embedder;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checks = 0;
    for corpus in 0..200 {
        let dim = [8, 16, 64][corpus % 3];
        let emb = HashingEmbedder::new(dim);
        let n = rng.gen_range(1..=50);
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let mut refs: Vec<ReferencePair> = ids
            .iter()
            .map(|i| ReferencePair::new(format!("r{i:02}"), random_text(&mut rng), "class X {}"))
            .collect();
        let query = SampleUnit::new("q", random_text(&mut rng));
        let qv = emb.embed(&query.plsql_source).unwrap().values;
        let mut brute: Vec<(f64, String)> = refs
            .iter()
            .map(|r| {
                let v = emb.embed(&r.plsql_source).unwrap().values;
                (oracle_cosine(&qv, &v), r.id.clone())
            })
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        for k in [1, 3, 5] {
            let got: Vec<String> = retrieve_top_k(&query, &mut refs, k, &emb)
                .unwrap()
                .into_iter()
                .map(|e| e.pair.id)
                .collect();
            let want: Vec<String> = brute.iter().take(k).map(|b| b.1.clone()).collect();
            ensure!(
                got == want,
                "corpus {corpus}, k={k}: got {got:?}, want {want:?}"
            );
            checks += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{checks} top-k comparisons, 0 mismatches, {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------- 3

struct Direct {
    ndcg: f64,
    mrr: f64,
    recall: f64,
}

fn direct_metrics(ranked: &[String], grades: &BTreeMap<String, u32>, k: usize) -> Direct {
    let mut first: Vec<&String> = Vec::new();
    for id in ranked {
        if !first.contains(&id) {
            first.push(id);
        }
    }
    let g = |id: &String| *grades.get(id).unwrap_or(&0) as f64;
    let top: Vec<f64> = first.iter().take(k).map(|id| g(id)).collect();
    let dcg: f64 = top
        .iter()
        .enumerate()
        .map(|(i, x)| x / ((i + 2) as f64).ln() * 2f64.ln())
        .sum();
    let mut ideal: Vec<f64> = grades
        .values()
        .map(|&x| x as f64)
        .filter(|&x| x > 0.0)
        .collect();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, x)| x / ((i + 2) as f64).ln() * 2f64.ln())
        .sum();
    let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
    let mrr = top
        .iter()
        .position(|&x| x > 0.0)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64);
    let recall = if top.iter().any(|&x| x > 0.0) {
        1.0
    } else {
        0.0
    };
    Direct { ndcg, mrr, recall }
}

fn c3_ranking_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 3;
    let mut instances: Vec<(Vec<String>, BTreeMap<String, u32>)> = Vec::new();
    // fixed edge cases: nothing relevant, relevant exactly at rank k, just past k, duplicates
    let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    instances.push((ids(&["a", "b", "c", "d"]), BTreeMap::new()));
    instances.push((ids(&["a", "b", "c", "d"]), [("c".to_string(), 2)].into()));
    instances.push((ids(&["a", "b", "c", "d"]), [("d".to_string(), 1)].into()));
    instances.push((ids(&["a", "a", "b", "c"]), [("c".to_string(), 1)].into()));
    instances.push((
        ids(&["x"]),
        [("x".to_string(), 3), ("y".to_string(), 1)].into(),
    ));
    while instances.len() < 100 {
        let n = rng.gen_range(1..10);
        let mut ranked: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        ranked.shuffle(&mut rng);
        if rng.gen_bool(0.2) {
            let dup = ranked[rng.gen_range(0..n)].clone();
            ranked.insert(rng.gen_range(0..=n), dup);
        }
        let mut grades = BTreeMap::new();
        for i in 0..12 {
            if rng.gen_bool(0.3) {
                grades.insert(format!("d{i}"), rng.gen_range(0..4));
            }
        }
        instances.push((ranked, grades));
    }
    let mut worst: f64 = 0.0;
    for (i, (ranked, grades)) in instances.iter().enumerate() {
        let j = RelevanceJudgments::new(format!("q{i}"), grades.clone());
        let want = direct_metrics(ranked, grades, k);
        let got = (
            ndcg_at_k::<f64, _>(ranked, &j, k),
            mrr_at_k::<f64, _>(ranked, &j, k),
            recall_at_k::<f64, _>(ranked, &j, k),
        );
        for (name, g, w) in [
            ("ndcg", got.0, want.ndcg),
            ("mrr", got.1, want.mrr),
            ("recall", got.2, want.recall),
        ] {
            let d = (g - w).abs();
            worst = worst.max(d);
            ensure!(d <= 1e-9, "instance {i} {name}: got {g}, want {w}");
        }
    }
    Ok(format!(
        "{} instances, max deviation {worst:.1e}",
        instances.len()
    ))
}

// ---------------------------------------------------------------- 4

fn c4_extraction_golden() -> Check {
    let root = fixtures().join("javalib");
    let golden_path = fixtures().join("javalib.golden.jsonl");
    let golden: Vec<ApiEntry> = load_jsonl_corpus(&golden_path).map_err(|e| e.to_string())?;
    let files = java_files(&root);
    ensure!(files.len() >= 3, "fixture has {} files", files.len());
    ensure!(golden.len() >= 8, "golden lists {} entries", golden.len());
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let ex = extract_api_entries(&root).map_err(|e| e.to_string())?;
        ensure!(ex.warnings.is_empty(), "warnings: {:?}", ex.warnings);
        ensure!(
            ex.entries == golden,
            "run {run}: entries differ from golden"
        );
        let out = tmp.path().join(format!("kb{run}.jsonl"));
        write_jsonl_corpus(&out, &ex.entries).map_err(|e| e.to_string())?;
        outputs.push(fs::read(&out).unwrap());
    }
    ensure!(outputs[0] == outputs[1], "runs differ");
    ensure!(
        outputs[0] == fs::read(&golden_path).unwrap(),
        "kb.jsonl bytes differ from golden"
    );
    Ok(format!(
        "{} files, {} entries, identical across 2 runs",
        files.len(),
        golden.len()
    ))
}

// ---------------------------------------------------------------- 5

struct StubEvaluator {
    outcomes: HashMap<String, EvalOutcome>,
    calls: Mutex<usize>,
}

impl StubEvaluator {
    fn new(pairs: &[(&str, EvalOutcome)]) -> Self {
        StubEvaluator {
            outcomes: pairs
                .iter()
                .map(|(c, o)| (c.to_string(), o.clone()))
                .collect(),
            calls: Mutex::new(0),
        }
    }
}

impl CandidateEvaluator for StubEvaluator {
    fn evaluate(&self, _: &SampleUnit, code: &str) -> Result<EvalOutcome, HarnessError> {
        *self.calls.lock().unwrap() += 1;
        let mut o = self
            .outcomes
            .get(code)
            .cloned()
            .unwrap_or_else(|| outcome(true, false, 0, 0));
        if !o.is_full_success() {
            o.diagnostics = vec![Diagnostic::error(format!("{code} is not done"))];
        }
        Ok(o)
    }
}

struct Scenario {
    trace: RunTrace,
    grounding: usize,
    refinement: usize,
    evaluations: usize,
}

fn scenario(stub: StubEvaluator, codes: &[&str], max_iterations: u32) -> Scenario {
    let fence = |c: &str| format!("```java\n{c}\n```");
    let chat = ScriptedProvider::with_roles([
        (AgentRole::Initial, vec![fence(codes[0])]),
        (AgentRole::Grounding, vec!["[\"Api#call/0\"]".to_string()]),
        (
            AgentRole::Refinement,
            codes[1..].iter().map(|c| fence(c)).collect(),
        ),
    ]);
    let emb = HashingEmbedder::new(32);
    let mut cfg = PipelineConfig::new("true {workdir}", "true {workdir} {summary}");
    cfg.max_iterations = max_iterations;
    let kb: Vec<ApiEntry> = serde_json::from_str(
        r#"[{"id":"Api#call/0","declaring_type":"Api","method_name":"call","parameters":[],
            "return_type":"void","body":"","file_location":{"path":"Api.java","line":2}}]"#,
    )
    .unwrap();
    let refs = vec![ReferencePair::new("r1", "BEGIN NULL; END;", "class R {}")];
    let inputs = PipelineInputs {
        refs: &refs,
        kb: &kb,
        config: &cfg,
        architecture: "Plain services.",
        providers: Providers {
            chat: &chat,
            embedder: &emb,
        },
        evaluator: &stub,
    };
    let run = run_pipeline(&SampleUnit::new("T", "BEGIN NULL; END;"), &inputs);
    let evaluations = *stub.calls.lock().unwrap();
    Scenario {
        trace: run.trace.expect("scenario produced a trace"),
        grounding: chat.consumed(AgentRole::Grounding),
        refinement: chat.consumed(AgentRole::Refinement),
        evaluations,
    }
}

fn summary(t: &RunTrace) -> (Vec<(u32, String)>, TerminationReason, usize) {
    (
        t.candidates
            .iter()
            .map(|c| (c.iteration, c.java_code.clone()))
            .collect(),
        t.termination_reason,
        t.best_index,
    )
}

fn expect(
    codes: &[&str],
    reason: TerminationReason,
    best: usize,
) -> (Vec<(u32, String)>, TerminationReason, usize) {
    (
        codes
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32, c.to_string()))
            .collect(),
        reason,
        best,
    )
}

fn c5_state_machine() -> Check {
    use TerminationReason::*;
    let all = ["c0", "c1", "c2", "c3", "c4", "c5"];

    // (a) initial candidate passes everything: no grounding, no refinement
    let a = scenario(
        StubEvaluator::new(&[("c0", outcome(true, true, 3, 3))]),
        &all,
        5,
    );
    ensure!(
        summary(&a.trace) == expect(&["c0"], Success, 0),
        "(a) trace {:?}",
        summary(&a.trace)
    );
    ensure!(a.trace.shortlist.is_empty(), "(a) shortlist not empty");
    ensure!(
        (a.grounding, a.refinement) == (0, 0),
        "(a) consumed {}/{}",
        a.grounding,
        a.refinement
    );

    // (b) compile failure, then 1/2 twice
    let b = scenario(
        StubEvaluator::new(&[
            ("c1", outcome(true, true, 2, 1)),
            ("c2", outcome(true, true, 2, 1)),
        ]),
        &all,
        5,
    );
    ensure!(
        summary(&b.trace) == expect(&["c0", "c1", "c2"], NoProgress, 1),
        "(b) trace {:?}",
        summary(&b.trace)
    );
    ensure!(
        b.trace.shortlist == ["Api#call/0"],
        "(b) shortlist {:?}",
        b.trace.shortlist
    );
    ensure!(
        (b.grounding, b.refinement) == (1, 2),
        "(b) consumed {}/{}",
        b.grounding,
        b.refinement
    );

    // (c) nothing ever compiles, cap 2
    let c = scenario(StubEvaluator::new(&[]), &all, 2);
    ensure!(
        summary(&c.trace) == expect(&["c0", "c1", "c2"], IterationCap, 0),
        "(c) trace {:?}",
        summary(&c.trace)
    );
    ensure!(c.evaluations == 3, "(c) {} evaluations", c.evaluations);

    // (d) invalid, tie at (false, 0), then 2/5, 4/5, 3/5
    let d = scenario(
        StubEvaluator::new(&[
            ("c0", outcome(false, false, 0, 0)),
            ("c2", outcome(true, true, 5, 2)),
            ("c3", outcome(true, true, 5, 4)),
            ("c4", outcome(true, true, 5, 3)),
        ]),
        &all,
        5,
    );
    ensure!(
        summary(&d.trace) == expect(&["c0", "c1", "c2", "c3", "c4"], NoProgress, 3),
        "(d) trace {:?}",
        summary(&d.trace)
    );
    let mut best_keys = Vec::new();
    for m in 0..d.trace.candidates.len() {
        let prefix = &d.trace.candidates[..=m];
        let best = prefix
            .iter()
            .map(|c| c.outcome.progress_key())
            .max()
            .unwrap();
        best_keys.push(best);
    }
    ensure!(
        best_keys.windows(2).all(|w| w[0] <= w[1]),
        "(d) best key decreased"
    );
    ensure!(d.evaluations <= 6, "(d) {} evaluations", d.evaluations);

    Ok("(a) success on initial, (b) no_progress, (c) iteration_cap, (d) best_index all as hand-traced".into())
}

// ---------------------------------------------------------------- 6

fn c6_structural_validity() -> Check {
    let mut corpus: Vec<(String, String)> = java_files(&fixtures().join("javalib"))
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read_to_string(&p).unwrap()))
        .collect();
    let refs: Vec<ReferencePair> =
        load_jsonl_corpus(&e2e().join("references.jsonl")).map_err(|e| e.to_string())?;
    corpus.extend(refs.into_iter().map(|r| (r.id, r.java_target)));
    for (name, src) in &corpus {
        let (ok, d) = check_structural_validity(src);
        ensure!(ok, "{name} rejected: {:?}", d.first().map(|x| &x.message));
    }

    let mut mutants = Vec::new();
    for (name, src) in &corpus {
        for (i, ch) in src.char_indices() {
            if ch == '{' || ch == '}' {
                let mut m = src.clone();
                m.remove(i);
                mutants.push((format!("{name}@{i}"), m));
            }
        }
    }
    ensure!(mutants.len() >= 20, "only {} mutants", mutants.len());

    let tmp = tempfile::tempdir().unwrap();
    let marker = tmp.path().join("compile-was-called");
    let poisoned = PipelineConfig::new(
        format!("touch {} {{workdir}}; exit 1", marker.display()),
        "true {workdir} {summary}",
    );
    let evaluator = SandboxEvaluator::new(poisoned);
    let sample = SampleUnit::new("m", "BEGIN NULL; END;");
    for (name, m) in &mutants {
        let (ok, _) = check_structural_validity(m);
        ensure!(!ok, "mutant {name} accepted");
        let o = evaluator.evaluate(&sample, m).map_err(|e| e.to_string())?;
        ensure!(
            !o.structurally_valid && !o.compiled,
            "mutant {name} evaluated as valid"
        );
    }
    ensure!(
        !marker.exists(),
        "compile command ran during the structural check"
    );
    Ok(format!(
        "{} fixture units accepted, {} brace-deletion mutants rejected, compile stub never invoked",
        corpus.len(),
        mutants.len()
    ))
}

// ---------------------------------------------------------------- 7

fn c7_end_to_end() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (build, translate, runs) = offline_batch(tmp.path(), 1);
    ensure!(
        build == 0 && translate == 0,
        "exit codes build-kb {build}, translate {translate}"
    );
    let report_path = tmp.path().join("report.json");
    let code = cli(&["evaluate", "--runs", p(&runs), "--out", p(&report_path)]);
    ensure!(code == 0, "evaluate exit {code}");
    let elapsed = start.elapsed();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let got = (
        report["sv_pct"].as_f64().unwrap(),
        report["cr_pct"].as_f64().unwrap(),
        report["tpr_pct"].as_f64().unwrap(),
    );
    // S1..S6: all end structurally valid; S1-S4 compile; S1, S2, S4 pass everything.
    ensure!(got == (100.0, 66.7, 50.0), "report SV/CR/TPR {got:?}");
    let traces = read_run_traces(&runs).map_err(|e| e.to_string())?;
    let reasons: Vec<(&str, &str, usize, usize)> = traces
        .iter()
        .map(|t| {
            (
                t.sample_id.as_str(),
                t.termination_reason.as_str(),
                t.candidates.len(),
                t.best_index,
            )
        })
        .collect();
    let want = vec![
        ("S1", "success", 1, 0),
        ("S2", "success", 2, 1),
        ("S3", "no_progress", 2, 0),
        ("S4", "success", 4, 3),
        ("S5", "iteration_cap", 4, 0),
        ("S6", "provider_error", 1, 0),
    ];
    ensure!(reasons == want, "traces {reasons:?}");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "SV {:.1} CR {:.1} TPR {:.1} in {elapsed:.2?}",
        got.0, got.1, got.2
    ))
}

// ---------------------------------------------------------------- 8

fn c8_concurrency() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let (_, t1, runs1) = offline_batch(tmp.path(), 1);
    let (_, t4, runs4) = offline_batch(tmp.path(), 4);
    ensure!(t1 == 0 && t4 == 0, "translate exit codes {t1}, {t4}");
    let a = dir_contents(&runs1);
    let b = dir_contents(&runs4);
    ensure!(a.len() == 12, "{} output files", a.len());
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        ensure!(na == nb, "file sets differ: {na} vs {nb}");
        ensure!(ca == cb, "{na} differs between 1 and 4 workers");
    }
    Ok(format!(
        "{} trace and prompt files identical for 1 and 4 workers",
        a.len()
    ))
}
