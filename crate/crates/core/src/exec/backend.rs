use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::duration_micros;

/// Backend name plus model label, e.g. `openai/gpt-4o-mini`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackendId {
    pub name: String,
    pub model: String,
}

impl BackendId {
    pub fn new(name: impl Into<String>, model: impl Into<String>) -> Self {
        Self { name: name.into(), model: model.into() }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    /// Vertex id, or a role key such as `lead`, `merge` or `arbiter`.
    pub subtask_id: String,
    pub instruction: String,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub subtask_id: String,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// False when the provider sent no usage block and the counts are a
    /// whitespace approximation.
    pub usage_reported: bool,
    #[serde(with = "duration_micros")]
    pub latency: Duration,
    pub backend: BackendId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Permanent(String),
    #[error("invocation timed out after {0} ms")]
    Timeout(u64),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_) | BackendError::Timeout(_))
    }
}

/// An agent that turns (instruction, context) into text. Implementations
/// must tolerate concurrent `invoke` calls.
#[async_trait]
pub trait AgentBackend: Send + Sync {
    fn id(&self) -> &BackendId;

    /// Declared context window, in tokens.
    fn max_context_tokens(&self) -> u64;

    async fn invoke(&self, request: &AgentRequest) -> Result<AgentOutput, BackendError>;
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Canned backend: echoes a deterministic answer after a fixed delay.
/// Delays go through `tokio::time`, so tests can run it on a paused clock.
#[derive(Debug)]
pub struct MockBackend {
    id: BackendId,
    latency: Duration,
    max_context: u64,
    fail: HashSet<String>,
    flaky: Mutex<HashMap<String, u32>>,
    calls: AtomicUsize,
    log: Mutex<Vec<AgentRequest>>,
}

impl MockBackend {
    pub fn new(model: impl Into<String>, latency: Duration) -> Self {
        Self {
            id: BackendId::new("mock", model),
            latency,
            max_context: 128_000,
            fail: HashSet::new(),
            flaky: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Every call for `subtask_id` fails permanently.
    pub fn failing_on(mut self, subtask_id: impl Into<String>) -> Self {
        self.fail.insert(subtask_id.into());
        self
    }

    /// The first `times` calls for `subtask_id` fail transiently.
    pub fn flaky_on(self, subtask_id: impl Into<String>, times: u32) -> Self {
        self.flaky.lock().unwrap().insert(subtask_id.into(), times);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<AgentRequest> {
        self.log.lock().unwrap().clone()
    }
}

#[async_trait]
impl AgentBackend for MockBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn max_context_tokens(&self) -> u64 {
        self.max_context
    }

    async fn invoke(&self, request: &AgentRequest) -> Result<AgentOutput, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(request.clone());
        tokio::time::sleep(self.latency).await;
        if self.fail.contains(&request.subtask_id) {
            return Err(BackendError::Permanent(format!("mock failure injected for {}", request.subtask_id)));
        }
        {
            let mut flaky = self.flaky.lock().unwrap();
            if let Some(left) = flaky.get_mut(&request.subtask_id) {
                if *left > 0 {
                    *left -= 1;
                    return Err(BackendError::Transient(format!("mock flake for {}", request.subtask_id)));
                }
            }
        }
        let first_line = request.instruction.lines().next().unwrap_or("");
        let text = format!("[{}] {}: {}", self.id.model, request.subtask_id, first_line);
        Ok(AgentOutput {
            subtask_id: request.subtask_id.clone(),
            prompt_tokens: whitespace_tokens(&request.instruction) + whitespace_tokens(&request.context),
            completion_tokens: whitespace_tokens(&text),
            usage_reported: true,
            text,
            latency: self.latency,
            backend: self.id.clone(),
        })
    }
}

/// One canned reply in a scripted fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    /// Fail this call with the given message instead of replying.
    #[serde(default)]
    pub fail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    One(ScriptedReply),
    /// Successive calls take successive replies; the last one repeats.
    Many(Vec<ScriptedReply>),
}

/// Fixture file layout for [`ScriptedBackend`].
///
/// ```json
/// {"model": "fixture", "latency_ms": 100,
///  "outputs": {"a": {"text": "...", "prompt_tokens": 12, "completion_tokens": 30},
///              "arbiter": [{"text": "first"}, {"text": "second"}]},
///  "default": {"text": "fallback"}}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFixture {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default = "default_context")]
    pub max_context_tokens: u64,
    #[serde(default)]
    pub outputs: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub default: Option<ScriptedReply>,
}

fn default_model() -> String {
    "fixture".into()
}

fn default_context() -> u64 {
    128_000
}

/// Replays canned outputs keyed by subtask id. Missing token counts fall
/// back to whitespace counts and are flagged as unreported.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: BackendId,
    fixture: ScriptFixture,
    cursor: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Self {
        Self {
            id: BackendId::new("scripted", fixture.model.clone()),
            fixture,
            cursor: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, BackendError> {
        let fixture: ScriptFixture =
            serde_json::from_str(doc).map_err(|e| BackendError::Config(format!("scripted fixture: {e}")))?;
        Ok(Self::new(fixture))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&doc)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_reply(&self, key: &str) -> Option<ScriptedReply> {
        match self.fixture.outputs.get(key) {
            Some(ScriptEntry::One(r)) => Some(r.clone()),
            Some(ScriptEntry::Many(list)) if !list.is_empty() => {
                let mut cursor = self.cursor.lock().unwrap();
                let i = cursor.entry(key.to_owned()).or_insert(0);
                let reply = list[(*i).min(list.len() - 1)].clone();
                *i += 1;
                Some(reply)
            }
            _ => self.fixture.default.clone(),
        }
    }
}

#[async_trait]
impl AgentBackend for ScriptedBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn max_context_tokens(&self) -> u64 {
        self.fixture.max_context_tokens
    }

    async fn invoke(&self, request: &AgentRequest) -> Result<AgentOutput, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let latency = Duration::from_millis(self.fixture.latency_ms);
        tokio::time::sleep(latency).await;
        let reply = self
            .next_reply(&request.subtask_id)
            .ok_or_else(|| BackendError::Permanent(format!("no scripted output for `{}`", request.subtask_id)))?;
        if let Some(msg) = reply.fail {
            return Err(BackendError::Permanent(msg));
        }
        let usage_reported = reply.prompt_tokens.is_some() && reply.completion_tokens.is_some();
        Ok(AgentOutput {
            subtask_id: request.subtask_id.clone(),
            prompt_tokens: reply.prompt_tokens.unwrap_or_else(|| {
                whitespace_tokens(&request.instruction) + whitespace_tokens(&request.context)
            }),
            completion_tokens: reply.completion_tokens.unwrap_or_else(|| whitespace_tokens(&reply.text)),
            usage_reported,
            text: reply.text,
            latency,
            backend: self.id.clone(),
        })
    }
}
