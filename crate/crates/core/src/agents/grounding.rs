use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{AgentError, Exchange, PromptLog};
use crate::apikb::{render_kb_digest, ApiEntry};
use crate::java::identifiers;
use crate::model::Diagnostic;
use crate::provider::{word_tokens, AgentRole, CallContext, ChatProvider, RequestSettings};

pub const FALLBACK_LIMIT: usize = 10;

const GROUNDING_SYSTEM: &str =
    "You select the existing APIs of a Java code base that a translation \
needs in order to compile and pass its tests.";

const ANSWER_FORMAT: &str = "Answer with a JSON array of entry ids from the knowledge base, \
for example [\"Type#method/1\"].";

const STRICT_FORMAT: &str =
    "Your previous answer could not be parsed. Reply with ONLY a JSON array \
of id strings taken from the first column of the knowledge base. No prose, no code fences.";

/// The APIs selected for one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortlist {
    pub entry_ids: Vec<String>,
    pub rejected_ids: Vec<String>,
    pub fallback_used: bool,
}

fn grounding_prompt(
    digest: &str,
    code: &str,
    diagnostics: &[Diagnostic],
    instruction: &str,
) -> String {
    let mut s = format!("### API knowledge base\n{digest}\n### Current translation\n```java\n{}\n```\n\n### Errors\n", code.trim_end());
    if diagnostics.is_empty() {
        s.push_str("(none)\n");
    }
    for d in diagnostics {
        s.push_str(&d.render());
        s.push('\n');
    }
    s.push('\n');
    s.push_str(instruction);
    s.push('\n');
    s
}

/// Finds a JSON array of strings in `text`, tolerating surrounding prose or a
/// code fence.
fn parse_id_array(text: &str) -> Option<Vec<String>> {
    let t = text.trim();
    if let Ok(v) = serde_json::from_str::<Vec<String>>(t) {
        return Some(v);
    }
    let start = t.find('[')?;
    let end = t.rfind(']')?;
    if end <= start {
        return None;
    }
    serde_json::from_str::<Vec<String>>(&t[start..=end]).ok()
}

fn split_ids(kb: &[ApiEntry], ids: Vec<String>) -> Shortlist {
    let known: HashSet<&str> = kb.iter().map(|e| e.id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Shortlist::default();
    for id in ids {
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            continue;
        }
        if known.contains(id.as_str()) {
            out.entry_ids.push(id);
        } else {
            out.rejected_ids.push(id);
        }
    }
    out
}

/// Lower-cased word tokens of the diagnostics' messages and of the code's
/// identifiers.
fn context_tokens(code: &str, diagnostics: &[Diagnostic]) -> BTreeSet<String> {
    let mut toks: BTreeSet<String> = diagnostics
        .iter()
        .flat_map(|d| word_tokens(&d.message))
        .collect();
    for ident in identifiers(code) {
        toks.extend(word_tokens(&ident));
    }
    toks
}

/// Number of distinct tokens shared between the entry's signature plus
/// description and `context`.
pub fn overlap_score(entry: &ApiEntry, context: &BTreeSet<String>) -> usize {
    let text = format!("{} {}", entry.signature(), entry.description);
    let own: BTreeSet<String> = word_tokens(&text).collect();
    own.intersection(context).count()
}

/// Top entries by token overlap, ties in knowledge-base order; entries that
/// share nothing with the context are left out.
pub fn fallback_shortlist(kb: &[ApiEntry], code: &str, diagnostics: &[Diagnostic]) -> Shortlist {
    let ctx = context_tokens(code, diagnostics);
    let mut scored: Vec<(usize, usize)> = kb
        .iter()
        .enumerate()
        .map(|(i, e)| (overlap_score(e, &ctx), i))
        .filter(|&(s, _)| s > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Shortlist {
        entry_ids: scored
            .into_iter()
            .take(FALLBACK_LIMIT)
            .map(|(_, i)| kb[i].id.clone())
            .collect(),
        rejected_ids: Vec::new(),
        fallback_used: true,
    }
}

/// Asks the grounding agent for a shortlist; re-asks once with a stricter
/// format on an unparseable reply, then falls back to token overlap.
#[allow(clippy::too_many_arguments)]
pub fn ground_apis(
    kb: &[ApiEntry],
    code: &str,
    diagnostics: &[Diagnostic],
    chat: &dyn ChatProvider,
    settings: &RequestSettings,
    digest_max_lines: Option<usize>,
    ctx: &CallContext<'_>,
    log: &mut PromptLog,
) -> Result<Shortlist, AgentError> {
    if kb.is_empty() {
        return Err(AgentError::EmptyKnowledgeBase);
    }
    let digest =
        render_kb_digest(kb, digest_max_lines).map_err(|_| AgentError::EmptyKnowledgeBase)?;
    for instruction in [ANSWER_FORMAT, STRICT_FORMAT] {
        let user = grounding_prompt(&digest, code, diagnostics, instruction);
        let mut exchange = Exchange {
            role: AgentRole::Grounding,
            iteration: 0,
            system_text: GROUNDING_SYSTEM.to_string(),
            user_text: user.clone(),
            response: None,
            error: None,
        };
        match chat.chat(ctx, &settings.request(GROUNDING_SYSTEM, user)) {
            Ok(resp) => {
                let parsed = parse_id_array(&resp.text);
                exchange.response = Some(resp.text);
                log.exchanges.push(exchange);
                if let Some(ids) = parsed {
                    return Ok(split_ids(kb, ids));
                }
            }
            Err(e) => {
                exchange.error = Some(e.to_string());
                log.exchanges.push(exchange);
                return Err(e.into());
            }
        }
    }
    log::debug!("grounding reply unparseable twice, using token-overlap fallback");
    Ok(fallback_shortlist(kb, code, diagnostics))
}
