use std::fmt::Write as _;

use super::{extract_code_block, AgentError, Exchange, PromptLog};
use crate::apikb::ApiEntry;
use crate::model::Diagnostic;
use crate::provider::{AgentRole, CallContext, ChatProvider, RequestSettings};

pub const MAX_DIAGNOSTICS: usize = 50;
pub const MAX_DIAGNOSTIC_CHARS: usize = 500;
pub const NO_API_CONTEXT: &str = "No API context available.";

const REFINE_SYSTEM: &str =
    "You repair Java translations of legacy PL/SQL so that they compile and \
pass their unit tests, using only the APIs that exist in the target code base.";

fn clip(s: &str, max_chars: usize) -> String {
    let flat = s.replace(['\r', '\n'], " ");
    match flat.char_indices().nth(max_chars) {
        Some((cut, _)) => flat[..cut].to_string(),
        None => flat,
    }
}

pub fn refinement_prompt(
    current: &str,
    shortlist: &[ApiEntry],
    diagnostics: &[Diagnostic],
) -> String {
    let mut s = String::from("### Available APIs\n");
    if shortlist.is_empty() {
        let _ = writeln!(s, "{NO_API_CONTEXT}");
    }
    for e in shortlist {
        let _ = writeln!(
            s,
            "#### {}\n{}\n{}\n```java\n{} {}\n```",
            e.id,
            e.signature(),
            e.description,
            e.declaration(),
            e.body.trim()
        );
    }
    let _ = write!(
        s,
        "\n### Current translation\n```java\n{}\n```\n\n### Errors\n",
        current.trim_end()
    );
    for d in diagnostics.iter().take(MAX_DIAGNOSTICS) {
        let _ = writeln!(s, "{}", clip(&d.render(), MAX_DIAGNOSTIC_CHARS));
    }
    if diagnostics.len() > MAX_DIAGNOSTICS {
        let _ = writeln!(
            s,
            "[... {} more diagnostics omitted]",
            diagnostics.len() - MAX_DIAGNOSTICS
        );
    }
    s.push_str(
        "\nFix every error above. Output the complete revised Java compilation unit in a single \
         fenced ```java code block.\n",
    );
    s
}

/// One refinement call: the shortlisted APIs, the current code and its
/// feedback go in, the next candidate comes out.
#[allow(clippy::too_many_arguments)]
pub fn refine_once(
    current: &str,
    shortlist: &[ApiEntry],
    diagnostics: &[Diagnostic],
    chat: &dyn ChatProvider,
    settings: &RequestSettings,
    ctx: &CallContext<'_>,
    iteration: u32,
    log: &mut PromptLog,
) -> Result<String, AgentError> {
    let user = refinement_prompt(current, shortlist, diagnostics);
    let mut exchange = Exchange {
        role: AgentRole::Refinement,
        iteration,
        system_text: REFINE_SYSTEM.to_string(),
        user_text: user.clone(),
        response: None,
        error: None,
    };
    match chat.chat(ctx, &settings.request(REFINE_SYSTEM, user)) {
        Ok(resp) => {
            exchange.response = Some(resp.text.clone());
            log.exchanges.push(exchange);
            extract_code_block(&resp.text)
        }
        Err(e) => {
            exchange.error = Some(e.to_string());
            log.exchanges.push(exchange);
            Err(e.into())
        }
    }
}
