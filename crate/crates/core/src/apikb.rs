//! The API knowledge base: public methods statically extracted from Java
//! library sources, annotated with short descriptions, and rendered as a
//! compact digest for prompts.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::java::{parse_compilation_unit, TypeDecl, TypeKind};
use crate::model::CorpusRecord;
use crate::provider::{AgentRole, CallContext, ChatProvider, ProviderError, RequestSettings};

#[derive(Debug, Error)]
pub enum ApiKbError {
    #[error("source root not found: {0}")]
    MissingRoot(PathBuf),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParam {
    pub name: String,
    #[serde(rename = "type")]
    pub type_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLocation {
    /// Path relative to the scanned source root, `/`-separated.
    pub path: String,
    pub line: u32,
}

/// One public method of the shared libraries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiEntry {
    /// `declaring_type#method_name/arity`, suffixed `~n` for same-arity overloads.
    pub id: String,
    pub declaring_type: String,
    pub method_name: String,
    pub parameters: Vec<ApiParam>,
    pub return_type: String,
    pub body: String,
    pub file_location: FileLocation,
    #[serde(default)]
    pub description: String,
}

impl ApiEntry {
    /// `declaring_type.method_name(T1, T2) -> R`
    pub fn signature(&self) -> String {
        let params: Vec<&str> = self
            .parameters
            .iter()
            .map(|p| p.type_text.as_str())
            .collect();
        format!(
            "{}.{}({}) -> {}",
            self.declaring_type,
            self.method_name,
            params.join(", "),
            self.return_type
        )
    }

    /// Java-style declaration, e.g. `String get(String key)`.
    pub fn declaration(&self) -> String {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|p| format!("{} {}", p.type_text, p.name))
            .collect();
        format!(
            "{} {}({})",
            self.return_type,
            self.method_name,
            params.join(", ")
        )
    }

    /// Simple (unqualified) name of the declaring type.
    pub fn simple_type_name(&self) -> &str {
        self.declaring_type
            .rsplit('.')
            .next()
            .unwrap_or(&self.declaring_type)
    }
}

impl CorpusRecord for ApiEntry {
    const KIND: &'static str = "api entry";

    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.method_name.is_empty() || self.declaring_type.is_empty() {
            return Err("api entry with empty id, method name or declaring type".into());
        }
        if self.file_location.line == 0 {
            return Err(format!("api entry {:?} has line 0", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub entries: Vec<ApiEntry>,
    pub warnings: Vec<ExtractionWarning>,
}

fn collect_java_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ApiKbError> {
    let io = |source| ApiKbError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_java_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "java") {
            out.push(path);
        }
    }
    Ok(())
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn method_is_public(owner: TypeKind, modifiers: &crate::java::Modifiers) -> bool {
    match owner {
        TypeKind::Interface => !modifiers.has("private"),
        TypeKind::Annotation => false,
        _ => modifiers.has("public"),
    }
}

fn nested_is_public(owner: TypeKind, modifiers: &crate::java::Modifiers) -> bool {
    match owner {
        TypeKind::Interface | TypeKind::Annotation => !modifiers.has("private"),
        _ => modifiers.has("public"),
    }
}

fn collect_type(decl: &TypeDecl, qualified: &str, path: &str, out: &mut Vec<ApiEntry>) {
    for m in decl
        .methods
        .iter()
        .filter(|m| method_is_public(decl.kind, &m.modifiers))
    {
        out.push(ApiEntry {
            id: String::new(),
            declaring_type: qualified.to_string(),
            method_name: m.name.clone(),
            parameters: m
                .parameters
                .iter()
                .map(|p| ApiParam {
                    name: p.name.clone(),
                    type_text: p.type_text.clone(),
                })
                .collect(),
            return_type: m.return_type.clone(),
            body: m.body.clone().unwrap_or_default(),
            file_location: FileLocation {
                path: path.to_string(),
                line: m.line,
            },
            description: String::new(),
        });
    }
    for n in decl
        .nested
        .iter()
        .filter(|n| nested_is_public(decl.kind, &n.modifiers))
    {
        collect_type(n, &format!("{qualified}.{}", n.name), path, out);
    }
}

/// Extracts every public method of every public top-level or nested type under
/// `source_root`. Files that fail to parse are skipped and reported as warnings.
pub fn extract_api_entries(source_root: &Path) -> Result<Extraction, ApiKbError> {
    if !source_root.is_dir() {
        return Err(ApiKbError::MissingRoot(source_root.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_java_files(source_root, &mut files)?;
    let mut rel: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| (relative_path(source_root, &p), p))
        .collect();
    rel.sort();

    let mut out = Extraction::default();
    for (rel_path, path) in &rel {
        let src = match fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => {
                out.warnings.push(ExtractionWarning {
                    path: rel_path.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        match parse_compilation_unit(&src) {
            Ok(cu) => {
                for t in cu.types.iter().filter(|t| t.modifiers.has("public")) {
                    let qualified = match &cu.package {
                        Some(p) => format!("{p}.{}", t.name),
                        None => t.name.clone(),
                    };
                    collect_type(t, &qualified, rel_path, &mut out.entries);
                }
            }
            Err(e) => out.warnings.push(ExtractionWarning {
                path: rel_path.clone(),
                message: format!("parse failure at {e}"),
            }),
        }
    }
    out.entries.sort_by(|a, b| {
        (&a.file_location.path, a.file_location.line)
            .cmp(&(&b.file_location.path, b.file_location.line))
    });
    assign_ids(&mut out.entries);
    Ok(out)
}

fn assign_ids(entries: &mut [ApiEntry]) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for e in entries.iter_mut() {
        let base = format!(
            "{}#{}/{}",
            e.declaring_type,
            e.method_name,
            e.parameters.len()
        );
        let n = seen.entry(base.clone()).or_insert(0);
        *n += 1;
        e.id = if *n == 1 { base } else { format!("{base}~{n}") };
    }
}

/// Where descriptions come from.
#[derive(Clone, Copy)]
pub enum DescriptionSource<'a> {
    /// Deterministic template, no model call.
    Offline,
    Provider {
        chat: &'a dyn ChatProvider,
        settings: RequestSettings,
    },
}

/// Description generation stopped on a provider error. `partial` holds every
/// entry, with descriptions filled in up to the failing one.
#[derive(Debug, Error)]
#[error("description generation failed after {done} entries: {source}")]
pub struct DescribeError {
    pub partial: Vec<ApiEntry>,
    pub done: usize,
    #[source]
    pub source: ProviderError,
}

pub fn offline_description(entry: &ApiEntry) -> String {
    format!(
        "Method {} of {} returning {}.",
        entry.method_name, entry.declaring_type, entry.return_type
    )
}

const DESCRIBE_SYSTEM: &str = "You document Java APIs of a shared enterprise framework. \
Answer with at most two plain sentences and no code.";

pub fn describe_prompt(entry: &ApiEntry) -> String {
    let body = if entry.body.is_empty() {
        "(abstract: no body)"
    } else {
        entry.body.as_str()
    };
    format!(
        "Briefly describe what the following method does and when a caller would use it.\n\n\
         Declaring type: {}\nSignature: {}\nBody:\n```java\n{}\n```\n",
        entry.declaring_type,
        entry.declaration(),
        body
    )
}

/// First `n` sentences of `text`, whitespace collapsed to single spaces. A
/// sentence ends at `.`, `!` or `?` followed by whitespace or the end.
pub fn first_sentences(text: &str, n: usize) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<(usize, char)> = collapsed.char_indices().collect();
    let mut count = 0;
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|(_, d)| *d == ' ') {
            count += 1;
            if count == n {
                return collapsed[..pos + c.len_utf8()].to_string();
            }
        }
    }
    collapsed
}

/// Fills empty descriptions; entries that already have one are left untouched.
pub fn generate_descriptions(
    entries: Vec<ApiEntry>,
    source: DescriptionSource<'_>,
) -> Result<Vec<ApiEntry>, DescribeError> {
    let mut entries = entries;
    for i in 0..entries.len() {
        if !entries[i].description.trim().is_empty() {
            continue;
        }
        let description = match source {
            DescriptionSource::Offline => offline_description(&entries[i]),
            DescriptionSource::Provider { chat, settings } => {
                let req = settings.request(DESCRIBE_SYSTEM, describe_prompt(&entries[i]));
                match chat.chat(&CallContext::new(AgentRole::Describe), &req) {
                    Ok(resp) => first_sentences(&resp.text, 2),
                    Err(source) => {
                        return Err(DescribeError {
                            partial: entries,
                            done: i,
                            source,
                        })
                    }
                }
            }
        };
        entries[i].description = description;
    }
    Ok(entries)
}

/// One digest line: `id | signature | description`.
pub fn digest_line(e: &ApiEntry) -> String {
    format!("{} | {} | {}", e.id, e.signature(), e.description)
}

/// Renders the knowledge base one entry per line. With a line cap smaller than
/// the entry count, entries are dropped from the tail and the last line becomes
/// `[truncated N entries]`.
pub fn render_kb_digest(
    entries: &[ApiEntry],
    max_lines: Option<usize>,
) -> Result<String, ApiKbError> {
    if entries.is_empty() {
        return Err(ApiKbError::EmptyKnowledgeBase);
    }
    let keep = match max_lines {
        Some(cap) if cap < entries.len() => cap.saturating_sub(1),
        _ => entries.len(),
    };
    let mut out = String::new();
    for e in &entries[..keep] {
        out.push_str(&digest_line(e));
        out.push('\n');
    }
    if keep < entries.len() {
        let _ = writeln!(out, "[truncated {} entries]", entries.len() - keep);
    }
    Ok(out)
}
