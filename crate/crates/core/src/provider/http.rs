use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use serde::Deserialize;
use serde_json::json;

use super::{
    check_embedding, CallContext, ChatProvider, ChatRequest, ChatResponse, Embedder,
    EmbeddingVector, FinishReason, ProviderError,
};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LT_API_KEY";

/// Client for OpenAI-compatible `/chat/completions` and `/embeddings` endpoints.
///
/// A timed-out request is retried once; HTTP error statuses are never retried.
#[derive(Debug, Clone)]
pub struct OpenAiCompatProvider {
    endpoint: String,
    chat_model: String,
    embed_model: String,
    api_key: Option<String>,
    embed_timeout: Duration,
    declared_dim: Option<usize>,
    client: Client,
}

#[derive(Deserialize)]
struct ChatCompletion {
    model: Option<String>,
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingList {
    model: Option<String>,
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl OpenAiCompatProvider {
    pub fn new(
        endpoint: impl Into<String>,
        chat_model: impl Into<String>,
        embed_model: impl Into<String>,
    ) -> Self {
        OpenAiCompatProvider {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            chat_model: chat_model.into(),
            embed_model: embed_model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            embed_timeout: Duration::from_secs(120),
            declared_dim: None,
            client: Client::new(),
        }
    }

    pub fn with_embed_timeout(mut self, timeout: Duration) -> Self {
        self.embed_timeout = timeout;
        self
    }

    pub fn with_dimension(mut self, dim: Option<usize>) -> Self {
        self.declared_dim = dim;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn post(&self, path: &str, body: &serde_json::Value, timeout: Duration) -> RequestBuilder {
        let mut rb = self
            .client
            .post(format!("{}/{path}", self.endpoint))
            .timeout(timeout)
            .json(body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        rb
    }

    fn send_json<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post(path, body, timeout).send() {
                Ok(resp) => {
                    let status = resp.status();
                    if !status.is_success() {
                        return Err(ProviderError::HttpError(status.as_u16()));
                    }
                    return resp
                        .json::<T>()
                        .map_err(|e| ProviderError::MalformedResponse(e.to_string()));
                }
                Err(e) if e.is_timeout() => {
                    if attempt >= 2 {
                        return Err(ProviderError::Timeout);
                    }
                    log::warn!("{path}: request timed out, retrying once");
                }
                Err(e) => return Err(ProviderError::Transport(e.to_string())),
            }
        }
    }
}

impl ChatProvider for OpenAiCompatProvider {
    fn chat(
        &self,
        _ctx: &CallContext<'_>,
        req: &ChatRequest,
    ) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let mut messages = Vec::new();
        if !req.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_text}));
        }
        messages.push(json!({"role": "user", "content": req.user_text}));
        let body = json!({
            "model": self.chat_model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let completion: ChatCompletion = self.send_json("chat/completions", &body, req.timeout)?;
        let choice = completion
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::MalformedResponse("no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Truncated,
            _ if text.is_empty() => FinishReason::Error,
            Some("stop") | None => FinishReason::Complete,
            Some(_) => FinishReason::Error,
        };
        Ok(ChatResponse {
            text,
            model_id: completion.model.unwrap_or_else(|| self.chat_model.clone()),
            finish_reason,
        })
    }
}

impl Embedder for OpenAiCompatProvider {
    fn dimension(&self) -> Option<usize> {
        self.declared_dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({"model": self.embed_model, "input": [text]});
        let list: EmbeddingList = self.send_json("embeddings", &body, self.embed_timeout)?;
        let values = list
            .data
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::MalformedResponse("no embedding data".into()))?
            .embedding;
        check_embedding(&values, self.declared_dim)?;
        Ok(EmbeddingVector {
            values,
            model_id: list.model.unwrap_or_else(|| self.embed_model.clone()),
        })
    }
}
