use super::{
    ground_apis, refine_once, translate_initial, AgentError, PromptLog, Providers, Shortlist,
};
use crate::apikb::ApiEntry;
use crate::evalharness::CandidateEvaluator;
use crate::model::{
    best_candidate_index, Candidate, EvalOutcome, PipelineConfig, ReferencePair, RunTrace,
    SampleUnit, SourceAgent, TerminationReason,
};
use crate::provider::{AgentRole, CallContext, RequestSettings};

/// Shared, read-only inputs of a batch run.
#[derive(Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub refs: &'a [ReferencePair],
    pub kb: &'a [ApiEntry],
    pub config: &'a PipelineConfig,
    pub architecture: &'a str,
    pub providers: Providers<'a>,
    pub evaluator: &'a dyn CandidateEvaluator,
}

/// Result of one sample. `trace` is `None` when no initial candidate could be
/// produced or evaluated; `error` then says why. A trace that ended in
/// `provider_error` carries the error text too.
#[derive(Debug)]
pub struct PipelineRun {
    pub trace: Option<RunTrace>,
    pub prompts: PromptLog,
    pub error: Option<AgentError>,
}

struct Loop<'a> {
    sample: &'a SampleUnit,
    candidates: Vec<Candidate>,
}

impl Loop<'_> {
    fn push(&mut self, iteration: u32, agent: SourceAgent, code: String, outcome: EvalOutcome) {
        self.candidates.push(Candidate {
            iteration,
            source_agent: agent,
            java_code: code,
            outcome,
        });
    }

    fn finish(self, shortlist: &Shortlist, reason: TerminationReason) -> RunTrace {
        let best_index = best_candidate_index(&self.candidates).unwrap_or(0);
        RunTrace {
            sample_id: self.sample.id.clone(),
            candidates: self.candidates,
            shortlist: shortlist.entry_ids.clone(),
            termination_reason: reason,
            best_index,
        }
    }
}

/// Runs one sample through translate, evaluate and (only on failure) ground
/// and refine.
pub fn run_pipeline(sample: &SampleUnit, inputs: &PipelineInputs<'_>) -> PipelineRun {
    let mut prompts = PromptLog::new(&sample.id);
    let settings = RequestSettings::from_config(inputs.config);
    let abort = |prompts: PromptLog, e: AgentError| {
        let mut prompts = prompts;
        prompts.error = Some(e.to_string());
        PipelineRun {
            trace: None,
            prompts,
            error: Some(e),
        }
    };

    let code0 = match translate_initial(
        sample,
        inputs.refs,
        inputs.architecture,
        inputs.config.k_exemplars,
        inputs.providers,
        &settings,
        &mut prompts,
    ) {
        Ok(c) => c,
        Err(e) => return abort(prompts, e),
    };
    let outcome0 = match inputs.evaluator.evaluate(sample, &code0) {
        Ok(o) => o,
        Err(e) => return abort(prompts, e.into()),
    };
    let mut run = Loop {
        sample,
        candidates: Vec::new(),
    };
    let success0 = outcome0.is_full_success();
    run.push(0, SourceAgent::Initial, code0, outcome0);
    if success0 {
        let trace = run.finish(&Shortlist::default(), TerminationReason::Success);
        return PipelineRun {
            trace: Some(trace),
            prompts,
            error: None,
        };
    }

    let stop_with_error =
        |run: Loop<'_>, shortlist: &Shortlist, mut prompts: PromptLog, e: AgentError| {
            prompts.error = Some(e.to_string());
            PipelineRun {
                trace: Some(run.finish(shortlist, TerminationReason::ProviderError)),
                prompts,
                error: Some(e),
            }
        };

    let shortlist = if inputs.kb.is_empty() {
        Shortlist::default()
    } else {
        let first = &run.candidates[0];
        match ground_apis(
            inputs.kb,
            &first.java_code,
            &first.outcome.diagnostics,
            inputs.providers.chat,
            &settings,
            inputs.config.kb_digest_max_lines,
            &CallContext::for_sample(AgentRole::Grounding, &sample.id),
            &mut prompts,
        ) {
            Ok(s) => s,
            Err(e) => return stop_with_error(run, &Shortlist::default(), prompts, e),
        }
    };
    prompts.shortlist = Some(shortlist.clone());
    let entries: Vec<ApiEntry> = shortlist
        .entry_ids
        .iter()
        .filter_map(|id| inputs.kb.iter().find(|e| &e.id == id).cloned())
        .collect();

    let mut best = 0usize;
    let mut m = 0u32;
    let reason = loop {
        if m >= inputs.config.max_iterations {
            break TerminationReason::IterationCap;
        }
        m += 1;
        let last = run.candidates.last().expect("candidate 0 exists");
        let next = refine_once(
            &last.java_code,
            &entries,
            &last.outcome.diagnostics,
            inputs.providers.chat,
            &settings,
            &CallContext::for_sample(AgentRole::Refinement, &sample.id),
            m,
            &mut prompts,
        );
        let code = match next {
            Ok(c) => c,
            Err(e) => return stop_with_error(run, &shortlist, prompts, e),
        };
        let outcome = match inputs.evaluator.evaluate(sample, &code) {
            Ok(o) => o,
            Err(e) => return stop_with_error(run, &shortlist, prompts, e.into()),
        };
        let key = outcome.progress_key();
        let success = outcome.is_full_success();
        run.push(m, SourceAgent::Refinement, code, outcome);
        if success {
            break TerminationReason::Success;
        }
        let best_key = run.candidates[best].outcome.progress_key();
        if key > best_key {
            best = run.candidates.len() - 1;
        } else if best_key.0 {
            break TerminationReason::NoProgress;
        }
    };
    log::debug!(
        "{}: {} after {} refinement(s)",
        sample.id,
        reason.as_str(),
        m
    );
    PipelineRun {
        trace: Some(run.finish(&shortlist, reason)),
        prompts,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Mutex;

    use proptest::prelude::*;

    use super::*;
    use crate::apikb::{ApiParam, FileLocation};
    use crate::evalharness::HarnessError;
    use crate::model::Diagnostic;
    use crate::provider::{HashingEmbedder, ScriptedProvider};

    /// Outcome looked up by the candidate's code; unknown code fails to compile.
    struct Stub {
        outcomes: HashMap<String, EvalOutcome>,
        calls: Mutex<usize>,
    }

    fn outcome(compiled: bool, total: u32, passed: u32) -> EvalOutcome {
        EvalOutcome {
            structurally_valid: true,
            compiled,
            tests_total: total,
            tests_passed: passed,
            diagnostics: if compiled && passed == total {
                vec![]
            } else {
                vec![Diagnostic::error("something is wrong")]
            },
        }
    }

    impl Stub {
        fn new(pairs: &[(&str, EvalOutcome)]) -> Self {
            Stub {
                outcomes: pairs
                    .iter()
                    .map(|(c, o)| (c.to_string(), o.clone()))
                    .collect(),
                calls: Mutex::new(0),
            }
        }
    }

    impl CandidateEvaluator for Stub {
        fn evaluate(&self, _: &SampleUnit, code: &str) -> Result<EvalOutcome, HarnessError> {
            *self.calls.lock().unwrap() += 1;
            Ok(self
                .outcomes
                .get(code)
                .cloned()
                .unwrap_or_else(|| outcome(false, 2, 0)))
        }
    }

    fn kb() -> Vec<ApiEntry> {
        vec![ApiEntry {
            id: "Store#get/1".into(),
            declaring_type: "Store".into(),
            method_name: "get".into(),
            parameters: vec![ApiParam {
                name: "k".into(),
                type_text: "String".into(),
            }],
            return_type: "Object".into(),
            body: "{ return null; }".into(),
            file_location: FileLocation {
                path: "Store.java".into(),
                line: 3,
            },
            description: "Reads.".into(),
        }]
    }

    fn go(script: &str, stub: &Stub, max_iter: u32) -> (PipelineRun, ScriptedProvider) {
        let chat = ScriptedProvider::from_json(script).unwrap();
        let emb = HashingEmbedder::new(32);
        let mut cfg = PipelineConfig::new("true", "true");
        cfg.max_iterations = max_iter;
        let kb = kb();
        let run = {
            let inputs = PipelineInputs {
                refs: &[],
                kb: &kb,
                config: &cfg,
                architecture: "Layered services.",
                providers: Providers {
                    chat: &chat,
                    embedder: &emb,
                },
                evaluator: stub,
            };
            run_pipeline(&SampleUnit::new("S1", "BEGIN NULL; END;"), &inputs)
        };
        (run, chat)
    }

    fn fenced(code: &str) -> String {
        format!("```java\\n{code}\\n```")
    }

    #[test]
    fn success_on_initial_skips_grounding() {
        let stub = Stub::new(&[("c0", outcome(true, 3, 3))]);
        let script = format!(
            r#"{{"initial":["{}"],"grounding":["[]"],"refinement":["{}"]}}"#,
            fenced("c0"),
            fenced("c1")
        );
        let (run, chat) = go(&script, &stub, 5);
        let t = run.trace.unwrap();
        assert_eq!(t.candidates.len(), 1);
        assert!(t.shortlist.is_empty());
        assert_eq!(t.termination_reason, TerminationReason::Success);
        assert_eq!(chat.consumed(AgentRole::Grounding), 0);
        assert_eq!(chat.consumed(AgentRole::Refinement), 0);
    }

    #[test]
    fn no_progress_after_equal_refinement() {
        let stub = Stub::new(&[("c1", outcome(true, 2, 1)), ("c2", outcome(true, 2, 1))]);
        let script = format!(
            r#"{{"initial":["{}"],"grounding":["[\"Store#get/1\"]"],"refinement":["{}","{}","{}"]}}"#,
            fenced("c0"),
            fenced("c1"),
            fenced("c2"),
            fenced("c3")
        );
        let (run, chat) = go(&script, &stub, 5);
        let t = run.trace.unwrap();
        assert_eq!(t.termination_reason, TerminationReason::NoProgress);
        assert_eq!(t.candidates.len(), 3);
        assert_eq!(t.best_index, 1);
        assert_eq!(t.shortlist, vec!["Store#get/1"]);
        assert_eq!(chat.consumed(AgentRole::Grounding), 1);
        assert_eq!(chat.consumed(AgentRole::Refinement), 2);
        assert!(run.prompts.exchanges[2]
            .user_text
            .contains("Store.get(String) -> Object"));
    }

    #[test]
    fn iteration_cap_when_nothing_compiles() {
        let stub = Stub::new(&[]);
        let script = format!(
            r#"{{"initial":["{}"],"grounding":["[]"],"refinement":["{}","{}","{}"]}}"#,
            fenced("c0"),
            fenced("c1"),
            fenced("c2"),
            fenced("c3")
        );
        let (run, _) = go(&script, &stub, 2);
        let t = run.trace.unwrap();
        assert_eq!(t.termination_reason, TerminationReason::IterationCap);
        let iters: Vec<u32> = t.candidates.iter().map(|c| c.iteration).collect();
        assert_eq!(iters, vec![0, 1, 2]);
        assert_eq!(*stub.calls.lock().unwrap(), 3);
    }

    #[test]
    fn exhausted_refinement_is_provider_error() {
        let stub = Stub::new(&[]);
        let script = format!(r#"{{"initial":["{}"],"grounding":["[]"]}}"#, fenced("c0"));
        let (run, _) = go(&script, &stub, 3);
        let t = run.trace.unwrap();
        assert_eq!(t.termination_reason, TerminationReason::ProviderError);
        assert_eq!(t.candidates.len(), 1);
        assert!(run.error.is_some());
    }

    #[test]
    fn failing_initial_call_aborts_without_trace() {
        let stub = Stub::new(&[]);
        let (run, _) = go(r#"{"initial":[""]}"#, &stub, 3);
        assert!(run.trace.is_none());
        assert!(matches!(run.error, Some(AgentError::EmptyTranslation)));
    }

    fn arb_outcome() -> impl Strategy<Value = EvalOutcome> {
        (any::<bool>(), 0u32..4, 0u32..4).prop_map(|(compiled, total, passed)| {
            let total = if compiled { total } else { 0 };
            outcome(compiled, total, passed.min(total))
        })
    }

    proptest! {
        #[test]
        fn halts_within_bound_and_best_key_never_drops(
            outcomes in prop::collection::vec(arb_outcome(), 1..9),
            max_iter in 1u32..6,
        ) {
            // one reply per possible iteration; codes past `outcomes` fail to compile
            let n = outcomes.len().max(max_iter as usize + 1);
            let codes: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let pairs: Vec<(&str, EvalOutcome)> =
                codes.iter().map(String::as_str).zip(outcomes.iter().cloned()).collect();
            let stub = Stub::new(&pairs);
            let refinements: Vec<String> = codes[1..].iter().map(|c| format!("\"{}\"", fenced(c))).collect();
            let script = format!(
                r#"{{"initial":["{}"],"grounding":["[]"],"refinement":[{}]}}"#,
                fenced("c0"),
                refinements.join(",")
            );
            let (run, chat) = go(&script, &stub, max_iter);
            let t = run.trace.unwrap();
            prop_assert!(t.validate().is_ok());
            prop_assert!(t.candidates.len() as u32 <= max_iter + 1);
            prop_assert!(*stub.calls.lock().unwrap() <= max_iter as usize + 1);
            let initial_ok = outcomes[0].is_full_success();
            prop_assert_eq!(chat.consumed(AgentRole::Grounding) == 0, initial_ok);
            prop_assert_eq!(chat.consumed(AgentRole::Refinement) == 0, initial_ok);
            let mut best = (false, 0);
            for c in &t.candidates {
                let next = best.max(c.outcome.progress_key());
                prop_assert!(next >= best);
                best = next;
            }
            prop_assert_eq!(t.candidates[t.best_index].outcome.progress_key(), best);
            if t.termination_reason == TerminationReason::Success {
                prop_assert!(t.candidates.last().unwrap().outcome.is_full_success());
            }
        }
    }

    #[test]
    fn best_index_tracks_lexicographic_key() {
        let stub = Stub::new(&[
            ("c1", outcome(true, 4, 1)),
            ("c2", outcome(true, 4, 3)),
            ("c3", outcome(true, 4, 2)),
        ]);
        let script = format!(
            r#"{{"initial":["{}"],"grounding":["[]"],"refinement":["{}","{}","{}"]}}"#,
            fenced("c0"),
            fenced("c1"),
            fenced("c2"),
            fenced("c3")
        );
        let (run, _) = go(&script, &stub, 5);
        let t = run.trace.unwrap();
        assert_eq!(t.termination_reason, TerminationReason::NoProgress);
        assert_eq!(t.best_index, 2);
    }
}
