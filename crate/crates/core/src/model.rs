//! Shared domain types and their on-disk formats: JSON Lines corpora, per-sample
//! run traces and the pipeline configuration document.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Embedding;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(PathBuf),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid run trace: {0}")]
    Invalid(String),
    #[error("malformed trace file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    IoFailure {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A record that can live in a JSON Lines corpus file.
pub trait CorpusRecord: Serialize + DeserializeOwned {
    /// Human readable corpus kind, used in error messages.
    const KIND: &'static str;

    fn id(&self) -> &str;

    /// Checks the record-level invariants that serde cannot express.
    fn validate(&self) -> Result<(), String>;
}

/// One legacy unit to translate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleUnit {
    pub id: String,
    pub plsql_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
}

impl SampleUnit {
    pub fn new(id: impl Into<String>, plsql_source: impl Into<String>) -> Self {
        SampleUnit {
            id: id.into(),
            plsql_source: plsql_source.into(),
            test_command: None,
            metadata: None,
        }
    }
}

impl CorpusRecord for SampleUnit {
    const KIND: &'static str = "sample";

    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("sample id is empty".into());
        }
        if self.plsql_source.is_empty() {
            return Err(format!("sample {:?} has empty plsql_source", self.id));
        }
        Ok(())
    }
}

/// One aligned PL/SQL→Java exemplar of the reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub id: String,
    pub plsql_source: String,
    pub java_target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl ReferencePair {
    pub fn new(
        id: impl Into<String>,
        plsql_source: impl Into<String>,
        java_target: impl Into<String>,
    ) -> Self {
        ReferencePair {
            id: id.into(),
            plsql_source: plsql_source.into(),
            java_target: java_target.into(),
            embedding: None,
        }
    }
}

impl CorpusRecord for ReferencePair {
    const KIND: &'static str = "reference";

    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("reference id is empty".into());
        }
        if self.plsql_source.is_empty() || self.java_target.is_empty() {
            return Err(format!("reference {:?} has an empty source text", self.id));
        }
        if let Some(e) = &self.embedding {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(format!(
                    "reference {:?} has a non-finite embedding",
                    self.id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// One structured compiler, test or syntax message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub line: Option<u32>,
    #[serde(default)]
    pub column: Option<u32>,
    pub severity: Severity,
    pub message: String,
    pub raw: String,
}

impl Diagnostic {
    /// Unstructured diagnostic carrying only the verbatim line.
    pub fn raw(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        Diagnostic {
            file: None,
            line: None,
            column: None,
            severity: Severity::Error,
            message: raw.trim().to_string(),
            raw,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        let message = message.into();
        Diagnostic {
            file: None,
            line: None,
            column: None,
            severity: Severity::Error,
            raw: format!("error: {message}"),
            message,
        }
    }

    /// Renders the diagnostic for a prompt. Uses the verbatim line when it carries
    /// information, otherwise a `file:line: severity: message` reconstruction.
    pub fn render(&self) -> String {
        if !self.raw.trim().is_empty() {
            return self.raw.clone();
        }
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match (&self.file, self.line) {
            (Some(f), Some(l)) => format!("{f}:{l}: {sev}: {}", self.message),
            _ => format!("{sev}: {}", self.message),
        }
    }
}

/// Result of evaluating one candidate translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub structurally_valid: bool,
    pub compiled: bool,
    pub tests_total: u32,
    pub tests_passed: u32,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl EvalOutcome {
    pub fn invalid(diagnostics: Vec<Diagnostic>) -> Self {
        EvalOutcome {
            structurally_valid: false,
            compiled: false,
            tests_total: 0,
            tests_passed: 0,
            diagnostics,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tests_passed > self.tests_total {
            return Err(format!(
                "tests_passed {} exceeds tests_total {}",
                self.tests_passed, self.tests_total
            ));
        }
        if !self.compiled && self.tests_passed > 0 {
            return Err("non-compiled outcome reports passing tests".into());
        }
        if !self.structurally_valid && self.compiled {
            return Err("structurally invalid outcome reports compilation".into());
        }
        Ok(())
    }

    /// Compiled and every test passed, with at least one test.
    pub fn is_full_success(&self) -> bool {
        self.compiled && self.tests_total > 0 && self.tests_passed == self.tests_total
    }

    /// Lexicographic progress key `(compiled, tests_passed)`.
    pub fn progress_key(&self) -> (bool, u32) {
        (self.compiled, self.tests_passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceAgent {
    Initial,
    Refinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Success,
    NoProgress,
    IterationCap,
    ProviderError,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Success => "success",
            TerminationReason::NoProgress => "no_progress",
            TerminationReason::IterationCap => "iteration_cap",
            TerminationReason::ProviderError => "provider_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub iteration: u32,
    pub source_agent: SourceAgent,
    pub java_code: String,
    pub outcome: EvalOutcome,
}

/// Full per-sample history of one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub sample_id: String,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub shortlist: Vec<String>,
    pub termination_reason: TerminationReason,
    pub best_index: usize,
}

/// Index of the candidate with the greatest `(compiled, tests_passed)`; ties go
/// to the earliest one. `None` for an empty slice.
pub fn best_candidate_index(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        match best {
            Some(b) if c.outcome.progress_key() <= candidates[b].outcome.progress_key() => {}
            _ => best = Some(i),
        }
    }
    best
}

impl RunTrace {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.best_index]
    }

    /// Number of refinement iterations performed (M_t).
    pub fn iterations(&self) -> u32 {
        self.candidates.len().saturating_sub(1) as u32
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("sample_id is empty".into());
        }
        let first = self.candidates.first().ok_or("trace has no candidates")?;
        if first.source_agent != SourceAgent::Initial {
            return Err("candidate 0 must come from the initial agent".into());
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if c.iteration as usize != i {
                return Err(format!("candidate {i} has iteration {}", c.iteration));
            }
            if i > 0 && c.source_agent != SourceAgent::Refinement {
                return Err(format!("candidate {i} must come from the refinement agent"));
            }
            c.outcome
                .validate()
                .map_err(|e| format!("candidate {i}: {e}"))?;
        }
        if self.best_index >= self.candidates.len() {
            return Err(format!(
                "best_index {} out of range for {} candidates",
                self.best_index,
                self.candidates.len()
            ));
        }
        let expected = best_candidate_index(&self.candidates).unwrap_or(0);
        if expected != self.best_index {
            return Err(format!(
                "best_index {} does not select the best candidate {expected}",
                self.best_index
            ));
        }
        Ok(())
    }
}

/// File-system safe stem for a sample id.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn trace_path(dir: &Path, sample_id: &str) -> PathBuf {
    dir.join(format!("{}.trace.json", file_stem_for(sample_id)))
}

/// Validates and writes `<sample_id>.trace.json` into `dir`.
pub fn write_run_trace(trace: &RunTrace, dir: &Path) -> Result<PathBuf, TraceError> {
    trace.validate().map_err(TraceError::Invalid)?;
    let path = trace_path(dir, &trace.sample_id);
    let mut text = serde_json::to_string_pretty(trace).expect("trace serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| TraceError::IoFailure {
        context: format!("writing {}", path.display()),
        source,
    })?;
    Ok(path)
}

pub fn read_run_trace(path: &Path) -> Result<RunTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::IoFailure {
        context: format!("reading {}", path.display()),
        source,
    })?;
    let trace: RunTrace = serde_json::from_str(&text).map_err(|e| TraceError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    trace.validate().map_err(|message| TraceError::Malformed {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(trace)
}

/// Reads every `*.trace.json` in `dir`, sorted by file name.
pub fn read_run_traces(dir: &Path) -> Result<Vec<RunTrace>, TraceError> {
    let entries = fs::read_dir(dir).map_err(|source| TraceError::IoFailure {
        context: format!("listing {}", dir.display()),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".trace.json"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_run_trace(p)).collect()
}

/// Loads a JSON Lines corpus. Blank lines are ignored; line numbers are 1-based.
pub fn load_jsonl_corpus<R: CorpusRecord>(path: &Path) -> Result<Vec<R>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                context: format!("opening {}", path.display()),
                source,
            }
        }
    })?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            context: format!("reading {} line {lineno}", path.display()),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: R = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
            line: lineno,
            message: format!("not a {} record: {e}", R::KIND),
        })?;
        record
            .validate()
            .map_err(|message| CorpusError::MalformedLine {
                line: lineno,
                message,
            })?;
        if !seen.insert(record.id().to_string()) {
            return Err(CorpusError::DuplicateId(record.id().to_string()));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_jsonl_corpus<R: CorpusRecord>(path: &Path, records: &[R]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn default_k() -> usize {
    3
}
fn default_max_iterations() -> u32 {
    5
}
fn default_request_timeout() -> f64 {
    120.0
}
fn default_sandbox_timeout() -> f64 {
    60.0
}
fn default_max_output_tokens() -> u32 {
    4096
}
fn default_embedding_dim() -> usize {
    256
}

/// Pipeline configuration document.
///
/// `provider_endpoint` is either an OpenAI-compatible base URL or
/// `script:<path>` for a scripted replay provider. An `embed_model_id` of
/// `offline` selects the local hashing embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub provider_endpoint: String,
    pub chat_model_id: String,
    pub embed_model_id: String,
    #[serde(default = "default_k")]
    pub k_exemplars: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    pub compile_command: String,
    pub test_command: String,
    pub architecture_description_path: PathBuf,
    #[serde(default = "default_request_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_sandbox_timeout")]
    pub sandbox_timeout: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    /// Dimension of the offline embedder, and the expected dimension of remote ones.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// Line cap for the knowledge-base digest shown to the grounding agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_digest_max_lines: Option<usize>,
    /// Regex with named groups `file`, `line`, `col`, `severity`, `message`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic_pattern: Option<String>,
}

impl PipelineConfig {
    /// Minimal configuration around the given command templates, mostly for tests.
    pub fn new(compile_command: impl Into<String>, test_command: impl Into<String>) -> Self {
        PipelineConfig {
            provider_endpoint: "http://localhost:8000/v1".into(),
            chat_model_id: "default".into(),
            embed_model_id: "offline".into(),
            k_exemplars: default_k(),
            max_iterations: default_max_iterations(),
            compile_command: compile_command.into(),
            test_command: test_command.into(),
            architecture_description_path: PathBuf::from("architecture.md"),
            request_timeout: default_request_timeout(),
            sandbox_timeout: default_sandbox_timeout(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            embedding_dim: default_embedding_dim(),
            kb_digest_max_lines: None,
            diagnostic_pattern: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k_exemplars == 0 {
            return bad("k_exemplars must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0".into());
        }
        if [self.request_timeout, self.sandbox_timeout]
            .iter()
            .any(|t| t.is_nan() || *t <= 0.0)
        {
            return bad("timeouts must be positive".into());
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.kb_digest_max_lines == Some(0) {
            return bad("kb_digest_max_lines must be positive".into());
        }
        if !self.compile_command.contains("{workdir}") {
            return bad("compile_command must contain {workdir}".into());
        }
        if !self.test_command.contains("{workdir}") || !self.test_command.contains("{summary}") {
            return bad("test_command must contain {workdir} and {summary}".into());
        }
        if let Some(p) = &self.diagnostic_pattern {
            regex::Regex::new(p)
                .map_err(|e| ConfigError::Invalid(format!("diagnostic_pattern: {e}")))?;
        }
        Ok(())
    }

    /// Parses and validates a config file. A relative
    /// `architecture_description_path` is resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        if cfg.architecture_description_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.architecture_description_path = dir.join(&cfg.architecture_description_path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
