//! Chat-completion backends for OpenAI, Anthropic and Gemini.

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{whitespace_tokens, AgentBackend, AgentOutput, AgentRequest, BackendError, BackendId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    OpenAi,
    Anthropic,
    Gemini,
}

impl Provider {
    pub const ALL: [Provider; 3] = [Provider::OpenAi, Provider::Anthropic, Provider::Gemini];

    pub fn as_str(self) -> &'static str {
        match self {
            Provider::OpenAi => "openai",
            Provider::Anthropic => "anthropic",
            Provider::Gemini => "gemini",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s))
    }

    pub fn key_var(self) -> &'static str {
        match self {
            Provider::OpenAi => "OPENAI_API_KEY",
            Provider::Anthropic => "ANTHROPIC_API_KEY",
            Provider::Gemini => "GEMINI_API_KEY",
        }
    }

    pub fn default_base_url(self) -> &'static str {
        match self {
            Provider::OpenAi => "https://api.openai.com",
            Provider::Anthropic => "https://api.anthropic.com",
            Provider::Gemini => "https://generativelanguage.googleapis.com",
        }
    }

    pub fn default_model(self) -> &'static str {
        match self {
            Provider::OpenAi => "gpt-4o-mini",
            Provider::Anthropic => "claude-3.5-haiku",
            Provider::Gemini => "gemini-2.0-flash",
        }
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;
const ANTHROPIC_VERSION: &str = "2023-06-01";

#[derive(Debug, Clone)]
pub struct HttpBackend {
    provider: Provider,
    id: BackendId,
    api_key: String,
    base_url: String,
    max_tokens: u32,
    max_context: u64,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(provider: Provider, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            provider,
            id: BackendId::new(provider.as_str(), model),
            api_key: api_key.into(),
            base_url: provider.default_base_url().to_owned(),
            max_tokens: DEFAULT_MAX_TOKENS,
            max_context: 128_000,
            client: reqwest::Client::new(),
        }
    }

    /// Reads the provider's API key variable (`OPENAI_API_KEY`,
    /// `ANTHROPIC_API_KEY` or `GEMINI_API_KEY`).
    pub fn from_env(provider: Provider, model: impl Into<String>) -> Result<Self, BackendError> {
        let key = std::env::var(provider.key_var())
            .map_err(|_| BackendError::Config(format!("{} is not set", provider.key_var())))?;
        Ok(Self::new(provider, model, key))
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_owned();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_max_context(mut self, tokens: u64) -> Self {
        self.max_context = tokens;
        self
    }

    fn request(&self, req: &AgentRequest) -> reqwest::RequestBuilder {
        let model = &self.id.model;
        match self.provider {
            Provider::OpenAi => {
                let mut messages = Vec::new();
                if !req.context.is_empty() {
                    messages.push(json!({"role": "system", "content": req.context}));
                }
                messages.push(json!({"role": "user", "content": req.instruction}));
                self.client.post(format!("{}/v1/chat/completions", self.base_url)).bearer_auth(&self.api_key).json(
                    &json!({"model": model, "messages": messages, "temperature": 0.0, "max_tokens": self.max_tokens}),
                )
            }
            Provider::Anthropic => {
                let mut body = json!({
                    "model": model,
                    "max_tokens": self.max_tokens,
                    "temperature": 0.0,
                    "messages": [{"role": "user", "content": req.instruction}],
                });
                if !req.context.is_empty() {
                    body["system"] = json!(req.context);
                }
                self.client
                    .post(format!("{}/v1/messages", self.base_url))
                    .header("x-api-key", &self.api_key)
                    .header("anthropic-version", ANTHROPIC_VERSION)
                    .json(&body)
            }
            Provider::Gemini => {
                let mut body = json!({
                    "contents": [{"role": "user", "parts": [{"text": req.instruction}]}],
                    "generationConfig": {"temperature": 0.0, "maxOutputTokens": self.max_tokens},
                });
                if !req.context.is_empty() {
                    body["systemInstruction"] = json!({"parts": [{"text": req.context}]});
                }
                self.client
                    .post(format!("{}/v1beta/models/{model}:generateContent", self.base_url))
                    .header("x-goog-api-key", &self.api_key)
                    .json(&body)
            }
        }
    }
}

/// Extracted reply text and (prompt, completion) usage when present.
pub(crate) fn parse_reply(provider: Provider, body: &Value) -> Result<(String, Option<(u64, u64)>), String> {
    let u = |v: &Value, k: &str| v.get(k).and_then(Value::as_u64);
    match provider {
        Provider::OpenAi => {
            let text = body
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .ok_or("response has no choices[0].message.content")?;
            let usage = body.get("usage").and_then(|us| Some((u(us, "prompt_tokens")?, u(us, "completion_tokens")?)));
            Ok((text.to_owned(), usage))
        }
        Provider::Anthropic => {
            let blocks = body.get("content").and_then(Value::as_array).ok_or("response has no content array")?;
            let text: String = blocks.iter().filter_map(|b| b.get("text").and_then(Value::as_str)).collect();
            let usage = body.get("usage").and_then(|us| Some((u(us, "input_tokens")?, u(us, "output_tokens")?)));
            Ok((text, usage))
        }
        Provider::Gemini => {
            let parts = body
                .pointer("/candidates/0/content/parts")
                .and_then(Value::as_array)
                .ok_or("response has no candidates[0].content.parts")?;
            let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            let usage = body
                .get("usageMetadata")
                .and_then(|us| Some((u(us, "promptTokenCount")?, u(us, "candidatesTokenCount")?)));
            Ok((text, usage))
        }
    }
}

#[async_trait]
impl AgentBackend for HttpBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn max_context_tokens(&self) -> u64 {
        self.max_context
    }

    async fn invoke(&self, request: &AgentRequest) -> Result<AgentOutput, BackendError> {
        let started = tokio::time::Instant::now();
        let resp = self.request(request).send().await.map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().await.map_err(|e| BackendError::Transient(e.to_string()))?;
        if !status.is_success() {
            let msg = format!("{} returned {status}: {}", self.id, truncate(&body, 300));
            return Err(if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                BackendError::Transient(msg)
            } else {
                BackendError::Permanent(msg)
            });
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| BackendError::Permanent(format!("{} sent invalid JSON: {e}", self.id)))?;
        let (text, usage) =
            parse_reply(self.provider, &value).map_err(|e| BackendError::Permanent(format!("{}: {e}", self.id)))?;
        let (prompt_tokens, completion_tokens) = usage.unwrap_or_else(|| {
            (whitespace_tokens(&request.instruction) + whitespace_tokens(&request.context), whitespace_tokens(&text))
        });
        Ok(AgentOutput {
            subtask_id: request.subtask_id.clone(),
            text,
            prompt_tokens,
            completion_tokens,
            usage_reported: usage.is_some(),
            latency: started.elapsed(),
            backend: self.id.clone(),
        })
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
