use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::Deserialize;
use tempfile::TempDir;

use super::HarnessError;
use crate::model::{Diagnostic, PipelineConfig, Severity};

/// Overrides the root under which per-run work directories are created.
pub const SANDBOX_DIR_ENV: &str = "LT_SANDBOX_DIR";

/// Exit code recorded for a command killed on timeout.
pub const TIMEOUT_EXIT_CODE: i32 = 124;

/// File name substituted for `{summary}`, inside the work directory.
pub const SUMMARY_FILE: &str = "test-summary.json";

pub const DEFAULT_DIAGNOSTIC_PATTERN: &str = r"^(?P<file>[^:\s][^:]*?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?P<severity>error|warning):\s*(?P<message>.*)$";

const SHELL_NOT_FOUND: i32 = 127;

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxResult {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
    pub timed_out: bool,
}

#[derive(Debug)]
pub struct CompileResult {
    pub compiled: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub sandbox: SandboxResult,
    /// Kept alive so the test stage can run in the same directory.
    pub workdir: TempDir,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestRun {
    pub total: u32,
    pub passed: u32,
    /// `(name, detail)` of every failing test.
    pub failures: Vec<(String, String)>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn sandbox_root() -> PathBuf {
    std::env::var_os(SANDBOX_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs `sh -c <command>` in `workdir` in its own process group; the whole
/// group is killed when `timeout` elapses.
pub fn run_command(
    command: &str,
    workdir: &Path,
    timeout: Duration,
) -> Result<SandboxResult, HarnessError> {
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                HarnessError::CommandNotFound("sh".into())
            } else {
                HarnessError::Io(e)
            }
        })?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait().map_err(HarnessError::Io)? {
            break status;
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            // SAFETY: kill(2) with a negative pid signals the child's own process group.
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            break child.wait().map_err(HarnessError::Io)?;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let exit_code = if timed_out {
        TIMEOUT_EXIT_CODE
    } else {
        status.code().unwrap_or(-1)
    };
    if exit_code == SHELL_NOT_FOUND {
        return Err(HarnessError::CommandNotFound(command.to_string()));
    }
    Ok(SandboxResult {
        exit_code,
        stdout,
        stderr,
        duration: start.elapsed(),
        timed_out,
    })
}

fn default_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(DEFAULT_DIAGNOSTIC_PATTERN).expect("default pattern compiles"))
}

/// Structured diagnostics for every line matching `pattern` (named groups
/// `file`, `line`, `col`, `severity`, `message`; all optional).
pub fn parse_diagnostics(output: &str, pattern: &Regex) -> Vec<Diagnostic> {
    output
        .lines()
        .filter_map(|raw| {
            let caps = pattern.captures(raw)?;
            let num = |g: &str| caps.name(g).and_then(|m| m.as_str().parse::<u32>().ok());
            let severity = match caps.name("severity").map(|m| m.as_str()) {
                Some("warning") => Severity::Warning,
                _ => Severity::Error,
            };
            Some(Diagnostic {
                file: caps.name("file").map(|m| m.as_str().to_string()),
                line: num("line"),
                column: num("col"),
                severity,
                message: caps
                    .name("message")
                    .map_or_else(|| raw.trim().to_string(), |m| m.as_str().trim().to_string()),
                raw: raw.to_string(),
            })
        })
        .collect()
}

fn primary_type_name(code: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?m)^\s*(?:@\w+(?:\([^)]*\))?\s+)*public\s+(?:(?:final|abstract|sealed|strictfp)\s+)*(?:class|interface|enum|record|@interface)\s+([A-Za-z_$][\w$]*)")
            .unwrap()
    });
    re.captures(code)
        .map_or_else(|| "Main".to_string(), |c| c[1].to_string())
}

fn substitute(template: &str, workdir: &Path, summary: &Path) -> String {
    template
        .replace("{workdir}", &workdir.to_string_lossy())
        .replace("{summary}", &summary.to_string_lossy())
}

/// Output with the work directory prefix removed, so diagnostics do not depend
/// on where the sandbox lives.
fn relativize(text: &str, workdir: &Path) -> String {
    let prefix = format!("{}/", workdir.to_string_lossy());
    text.replace(&prefix, "")
}

/// Writes the candidate into a fresh work directory and runs the compile command.
pub fn compile_candidate(
    java_code: &str,
    config: &PipelineConfig,
) -> Result<CompileResult, HarnessError> {
    let root = sandbox_root();
    std::fs::create_dir_all(&root).map_err(HarnessError::WorkdirCreationFailure)?;
    let workdir = tempfile::Builder::new()
        .prefix("lt-run-")
        .tempdir_in(&root)
        .map_err(HarnessError::WorkdirCreationFailure)?;
    let file = workdir
        .path()
        .join(format!("{}.java", primary_type_name(java_code)));
    std::fs::write(&file, java_code).map_err(HarnessError::Io)?;

    let command = substitute(
        &config.compile_command,
        workdir.path(),
        &workdir.path().join(SUMMARY_FILE),
    );
    let sandbox = run_command(
        &command,
        workdir.path(),
        Duration::from_secs_f64(config.sandbox_timeout),
    )?;
    let compiled = sandbox.exit_code == 0 && !sandbox.timed_out;

    let custom;
    let pattern = match &config.diagnostic_pattern {
        Some(p) => {
            custom = Regex::new(p).map_err(|e| HarnessError::BadPattern(e.to_string()))?;
            &custom
        }
        None => default_pattern(),
    };
    let stderr = relativize(&sandbox.stderr, workdir.path());
    let stdout = relativize(&sandbox.stdout, workdir.path());
    let mut diagnostics = parse_diagnostics(&stderr, pattern);
    diagnostics.extend(parse_diagnostics(&stdout, pattern));
    if !compiled && diagnostics.is_empty() {
        let fallback = if stderr.trim().is_empty() {
            &stdout
        } else {
            &stderr
        };
        diagnostics.extend(
            fallback
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(Diagnostic::raw),
        );
    }
    if sandbox.timed_out {
        diagnostics.push(Diagnostic::error(format!(
            "compilation timed out after {}s",
            config.sandbox_timeout
        )));
    } else if !compiled && diagnostics.is_empty() {
        diagnostics.push(Diagnostic::error(format!(
            "compilation failed with exit code {}",
            sandbox.exit_code
        )));
    }
    Ok(CompileResult {
        compiled,
        diagnostics,
        sandbox,
        workdir,
    })
}

#[derive(Deserialize)]
struct Summary {
    total: u32,
    passed: u32,
    #[serde(default)]
    failures: Vec<Failure>,
}

#[derive(Deserialize)]
struct Failure {
    name: String,
    #[serde(default)]
    detail: String,
}

fn harness_diagnostic(message: String) -> Diagnostic {
    Diagnostic {
        file: None,
        line: None,
        column: None,
        severity: Severity::Error,
        raw: format!("harness: {message}"),
        message,
    }
}

/// Runs the test command and reads `{summary}`. A missing or malformed summary
/// counts as zero tests, with a harness diagnostic.
pub fn run_tests(
    workdir: &Path,
    test_command: &str,
    timeout_secs: f64,
) -> Result<TestRun, HarnessError> {
    let summary_path = workdir.join(SUMMARY_FILE);
    let _ = std::fs::remove_file(&summary_path);
    let command = substitute(test_command, workdir, &summary_path);
    let result = run_command(&command, workdir, Duration::from_secs_f64(timeout_secs))?;
    let empty = |message: String| TestRun {
        total: 0,
        passed: 0,
        failures: vec![],
        diagnostics: vec![harness_diagnostic(message)],
    };
    if result.timed_out {
        return Ok(empty(format!("test run timed out after {timeout_secs}s")));
    }
    let text = match std::fs::read_to_string(&summary_path) {
        Ok(t) => t,
        Err(_) => {
            return Ok(empty(format!(
                "test summary missing (test command exit code {})",
                result.exit_code
            )))
        }
    };
    let summary: Summary = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return Ok(empty(format!("malformed test summary: {e}"))),
    };
    if summary.passed > summary.total {
        return Ok(empty(format!(
            "malformed test summary: passed {} exceeds total {}",
            summary.passed, summary.total
        )));
    }
    let diagnostics = summary
        .failures
        .iter()
        .map(|f| {
            let message = format!("test {} failed: {}", f.name, f.detail);
            Diagnostic {
                file: None,
                line: None,
                column: None,
                severity: Severity::Error,
                raw: message.clone(),
                message,
            }
        })
        .collect();
    Ok(TestRun {
        total: summary.total,
        passed: summary.passed,
        failures: summary
            .failures
            .into_iter()
            .map(|f| (f.name, f.detail))
            .collect(),
        diagnostics,
    })
}
