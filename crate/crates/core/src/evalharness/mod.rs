//! Candidate evaluation: structural validity by grammar parse, compilation
//! and unit tests in a private work directory, and corpus-level reporting.

mod report;
mod sandbox;

use thiserror::Error;

use crate::java::parse_compilation_unit;
use crate::model::{Diagnostic, EvalOutcome, PipelineConfig, SampleUnit, Severity};

pub use report::{
    compute_report, render_report_json, render_report_markdown, round1, EvalReport,
    RetrievalSummary, SampleSummary,
};
pub use sandbox::{
    compile_candidate, parse_diagnostics, run_command, run_tests, sandbox_root, CompileResult,
    SandboxResult, TestRun, DEFAULT_DIAGNOSTIC_PATTERN, SANDBOX_DIR_ENV, SUMMARY_FILE,
    TIMEOUT_EXIT_CODE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("command not found: {0}")]
    CommandNotFound(String),
    #[error("cannot create work directory: {0}")]
    WorkdirCreationFailure(#[source] std::io::Error),
    #[error("sandbox i/o failure: {0}")]
    Io(#[source] std::io::Error),
    #[error("invalid diagnostic pattern: {0}")]
    BadPattern(String),
}

/// `true` iff `java_code` parses as a complete compilation unit. Never runs a
/// compiler. On failure the single syntax diagnostic locates the first error.
pub fn check_structural_validity(java_code: &str) -> (bool, Vec<Diagnostic>) {
    match parse_compilation_unit(java_code) {
        Ok(_) => (true, vec![]),
        Err(e) => {
            let message = format!("syntax error: {}", e.message);
            (
                false,
                vec![Diagnostic {
                    file: None,
                    line: Some(e.line),
                    column: Some(e.col),
                    severity: Severity::Error,
                    raw: format!("{}:{}: error: {message}", e.line, e.col),
                    message,
                }],
            )
        }
    }
}

/// Evaluates one candidate translation of a sample.
pub trait CandidateEvaluator: Send + Sync {
    fn evaluate(&self, sample: &SampleUnit, java_code: &str) -> Result<EvalOutcome, HarnessError>;
}

/// Structural check, then compile, then tests, each stage only when the
/// previous one succeeded.
#[derive(Debug, Clone)]
pub struct SandboxEvaluator {
    config: PipelineConfig,
}

impl SandboxEvaluator {
    pub fn new(config: PipelineConfig) -> Self {
        SandboxEvaluator { config }
    }
}

impl CandidateEvaluator for SandboxEvaluator {
    fn evaluate(&self, sample: &SampleUnit, java_code: &str) -> Result<EvalOutcome, HarnessError> {
        let (valid, syntax) = check_structural_validity(java_code);
        if !valid {
            return Ok(EvalOutcome::invalid(syntax));
        }
        let compile = compile_candidate(java_code, &self.config)?;
        if !compile.compiled {
            return Ok(EvalOutcome {
                structurally_valid: true,
                compiled: false,
                tests_total: 0,
                tests_passed: 0,
                diagnostics: compile.diagnostics,
            });
        }
        let template = sample
            .test_command
            .as_deref()
            .unwrap_or(&self.config.test_command);
        let tests = run_tests(
            compile.workdir.path(),
            template,
            self.config.sandbox_timeout,
        )?;
        let mut diagnostics = compile.diagnostics;
        diagnostics.extend(tests.diagnostics);
        Ok(EvalOutcome {
            structurally_valid: true,
            compiled: true,
            tests_total: tests.total,
            tests_passed: tests.passed,
            diagnostics,
        })
    }
}
