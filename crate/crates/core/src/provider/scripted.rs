use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde_json::Value;

use super::{
    AgentRole, CallContext, ChatProvider, ChatRequest, ChatResponse, FinishReason, ProviderError,
};

const SHARED_QUEUE: &str = "*";

/// Replays canned completions in order.
///
/// The script is either a JSON array (one queue shared by every caller) or an
/// object keyed by role tag. A key may be prefixed with a sample id
/// (`"S1:refinement"`) so concurrent pipeline runs each consume their own
/// queue. Lookup order for a call is `sample:role`, then `role`, then the
/// shared queue.
#[derive(Debug)]
pub struct ScriptedProvider {
    state: Mutex<State>,
}

#[derive(Debug, Default)]
struct State {
    queues: HashMap<String, VecDeque<String>>,
    consumed: BTreeMap<(Option<String>, AgentRole), usize>,
}

impl ScriptedProvider {
    pub const MODEL_ID: &'static str = "scripted";

    /// Single shared queue.
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut queues = HashMap::new();
        queues.insert(
            SHARED_QUEUE.to_string(),
            responses.into_iter().map(Into::into).collect(),
        );
        Self::from_queues(queues)
    }

    /// Queues keyed by role.
    pub fn with_roles<I, R, S>(roles: I) -> Self
    where
        I: IntoIterator<Item = (AgentRole, R)>,
        R: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queues = roles
            .into_iter()
            .map(|(role, rs)| {
                (
                    role.as_str().to_string(),
                    rs.into_iter().map(Into::into).collect(),
                )
            })
            .collect();
        Self::from_queues(queues)
    }

    fn from_queues(queues: HashMap<String, VecDeque<String>>) -> Self {
        ScriptedProvider {
            state: Mutex::new(State {
                queues,
                consumed: BTreeMap::new(),
            }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| ProviderError::MalformedScript(e.to_string()))?;
        let strings = |key: &str, v: &Value| -> Result<VecDeque<String>, ProviderError> {
            let arr = v.as_array().ok_or_else(|| {
                ProviderError::MalformedScript(format!("{key}: expected an array of strings"))
            })?;
            arr.iter()
                .map(|x| {
                    x.as_str().map(str::to_string).ok_or_else(|| {
                        ProviderError::MalformedScript(format!("{key}: non-string response"))
                    })
                })
                .collect()
        };
        let mut queues = HashMap::new();
        match &value {
            Value::Array(_) => {
                queues.insert(SHARED_QUEUE.to_string(), strings("script", &value)?);
            }
            Value::Object(map) => {
                for (key, v) in map {
                    let role_tag = key.rsplit_once(':').map_or(key.as_str(), |(_, r)| r);
                    if AgentRole::parse(role_tag).is_none() {
                        return Err(ProviderError::MalformedScript(format!(
                            "unknown role tag {key:?}"
                        )));
                    }
                    queues.insert(key.clone(), strings(key, v)?);
                }
            }
            _ => {
                return Err(ProviderError::MalformedScript(
                    "script must be a JSON object or array".into(),
                ))
            }
        }
        Ok(Self::from_queues(queues))
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::MalformedScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Responses consumed by `role`, summed over all samples.
    pub fn consumed(&self, role: AgentRole) -> usize {
        let state = self.state.lock().unwrap();
        state
            .consumed
            .iter()
            .filter(|((_, r), _)| *r == role)
            .map(|(_, n)| n)
            .sum()
    }

    /// Responses consumed by `role` on behalf of one sample.
    pub fn consumed_for(&self, sample_id: &str, role: AgentRole) -> usize {
        let state = self.state.lock().unwrap();
        state
            .consumed
            .get(&(Some(sample_id.to_string()), role))
            .copied()
            .unwrap_or(0)
    }

    /// Responses not yet consumed, over all queues.
    pub fn remaining(&self) -> usize {
        self.state
            .lock()
            .unwrap()
            .queues
            .values()
            .map(VecDeque::len)
            .sum()
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(
        &self,
        ctx: &CallContext<'_>,
        req: &ChatRequest,
    ) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let mut state = self.state.lock().unwrap();
        let role = ctx.role.as_str();
        let mut keys = Vec::with_capacity(3);
        if let Some(s) = ctx.sample_id {
            keys.push(format!("{s}:{role}"));
        }
        keys.push(role.to_string());
        keys.push(SHARED_QUEUE.to_string());
        let key = keys
            .iter()
            .find(|k| state.queues.contains_key(k.as_str()))
            .cloned()
            .ok_or_else(|| ProviderError::ProviderExhausted(keys[0].clone()))?;
        let text = state
            .queues
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .ok_or(ProviderError::ProviderExhausted(key))?;
        *state
            .consumed
            .entry((ctx.sample_id.map(str::to_string), ctx.role))
            .or_default() += 1;
        let finish_reason = if text.is_empty() {
            FinishReason::Error
        } else {
            FinishReason::Complete
        };
        Ok(ChatResponse {
            text,
            model_id: Self::MODEL_ID.into(),
            finish_reason,
        })
    }
}
