use std::fmt::Write as _;

use super::{AgentError, Exchange, PromptLog, Providers};
use crate::model::{ReferencePair, SampleUnit};
use crate::provider::{AgentRole, CallContext, RequestSettings};
use crate::retriever::{ensure_embeddings, rank_references, RetrievedExemplar};

pub const INITIAL_SYSTEM: &str = "You are a senior engineer migrating legacy Oracle PL/SQL modules \
to Java. Generated code must follow the target architecture and use its shared interfaces and APIs.";

pub const ARCHITECTURE_HEADING: &str = "### Target Java architecture";
pub const EXAMPLES_HEADING: &str = "### Translation examples";
pub const TASK_HEADING: &str = "### PL/SQL to translate";
pub const NO_EXAMPLES: &str = "No examples available.";

/// Assembled initial-translation prompt. `part_markers` are the byte offsets in
/// `user_text` of the architecture, exemplar and source sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub part_markers: [usize; 3],
}

pub fn assemble_initial_prompt(
    arch_description: &str,
    exemplars: &[RetrievedExemplar],
    sample: &SampleUnit,
) -> Result<PromptBundle, AgentError> {
    if arch_description.trim().is_empty() {
        return Err(AgentError::EmptyArchitectureDescription);
    }
    let mut u = String::new();
    let arch_at = u.len();
    let _ = writeln!(
        u,
        "{ARCHITECTURE_HEADING}\n{}\n",
        arch_description.trim_end()
    );

    let examples_at = u.len();
    let _ = writeln!(u, "{EXAMPLES_HEADING}");
    if exemplars.is_empty() {
        let _ = writeln!(u, "{NO_EXAMPLES}");
    }
    for ex in exemplars {
        let _ = writeln!(
            u,
            "#### Example {} ({})\nPL/SQL:\n```sql\n{}\n```\nJava:\n```java\n{}\n```",
            ex.rank,
            ex.pair.id,
            ex.pair.plsql_source.trim_end_matches('\n'),
            ex.pair.java_target.trim_end_matches('\n')
        );
    }
    u.push('\n');

    let task_at = u.len();
    let _ = write!(
        u,
        "{TASK_HEADING}\nTranslate this PL/SQL code into Java for the architecture described above. \
         Answer with a single fenced ```java code block containing the complete compilation unit.\n\
         ```sql\n{}\n```\n",
        sample.plsql_source.trim_end_matches('\n')
    );
    Ok(PromptBundle {
        system_text: INITIAL_SYSTEM.to_string(),
        user_text: u,
        part_markers: [arch_at, examples_at, task_at],
    })
}

/// Contents of the last fenced block tagged `java`, else of the last fenced
/// block with any tag, else the whole trimmed response. An unterminated final
/// fence runs to the end of the text.
pub fn extract_code_block(response_text: &str) -> Result<String, AgentError> {
    let mut blocks: Vec<(String, Vec<&str>)> = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in response_text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            match open.take() {
                Some(block) => blocks.push(block),
                None => open = Some((rest.trim().to_ascii_lowercase(), Vec::new())),
            }
        } else if let Some((_, lines)) = open.as_mut() {
            lines.push(line);
        }
    }
    if let Some(block) = open {
        blocks.push(block);
    }
    let code = if blocks.is_empty() {
        response_text.trim().to_string()
    } else {
        let chosen = blocks
            .iter()
            .rev()
            .find(|(tag, _)| tag == "java")
            .or_else(|| blocks.last())
            .unwrap();
        chosen.1.join("\n")
    };
    if code.trim().is_empty() {
        return Err(AgentError::EmptyTranslation);
    }
    Ok(code)
}

/// Retrieves exemplars, prompts the initial agent and extracts its code.
/// References without a cached embedding are embedded on the fly.
#[allow(clippy::too_many_arguments)]
pub fn translate_initial(
    sample: &SampleUnit,
    refs: &[ReferencePair],
    arch_description: &str,
    k: usize,
    providers: Providers<'_>,
    settings: &RequestSettings,
    log: &mut PromptLog,
) -> Result<String, AgentError> {
    let exemplars = if refs.is_empty() {
        Vec::new()
    } else {
        let query = providers.embedder.embed(&sample.plsql_source)?;
        if refs.iter().all(|r| r.embedding.is_some()) {
            rank_references(&query.values, refs, k)?
        } else {
            let mut owned = refs.to_vec();
            ensure_embeddings(&mut owned, providers.embedder)?;
            rank_references(&query.values, &owned, k)?
        }
    };
    log.exemplars = exemplars
        .iter()
        .map(|e| (e.pair.id.clone(), e.score))
        .collect();
    let bundle = assemble_initial_prompt(arch_description, &exemplars, sample)?;
    let req = settings.request(bundle.system_text.clone(), bundle.user_text.clone());
    let mut exchange = Exchange {
        role: AgentRole::Initial,
        iteration: 0,
        system_text: bundle.system_text,
        user_text: bundle.user_text,
        response: None,
        error: None,
    };
    let result = providers.chat.chat(
        &CallContext::for_sample(AgentRole::Initial, &sample.id),
        &req,
    );
    match result {
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
