//! Chat backends: a scripted one for offline runs and an HTTP client for
//! OpenAI-compatible chat-completion servers.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use trialmatch_core::gateway::{
    BackendError, ChatBackend, ChatMessage, GenerationConfig, RequestContext,
};

use crate::io::{self, IoError};

/// Name of the environment variable holding the HTTP backend credential.
pub const API_KEY_ENV: &str = "BACKEND_API_KEY";

#[derive(Deserialize)]
struct ScriptLine {
    #[serde(rename = "match")]
    key: RequestContext,
    response: String,
}

/// Replays canned responses keyed by (patient, trial, kind).
///
/// Several lines for the same key are served in file order on successive
/// calls, which scripts retries; the last one repeats once the others are
/// used up. A request with no scripted line fails with a backend error.
pub struct ScriptedBackend {
    name: String,
    responses: HashMap<RequestContext, Vec<String>>,
    served: Mutex<HashMap<RequestContext, usize>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(
        name: impl Into<String>,
        script: impl IntoIterator<Item = (RequestContext, String)>,
    ) -> Self {
        let mut responses: HashMap<RequestContext, Vec<String>> = HashMap::new();
        for (key, response) in script {
            responses.entry(key).or_default().push(response);
        }
        ScriptedBackend {
            name: name.into(),
            responses,
            served: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let lines: Vec<ScriptLine> = io::read_jsonl(path)?;
        Ok(Self::new(
            "mock",
            lines.into_iter().map(|l| (l.key, l.response)),
        ))
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Total `generate` calls so far, scripted or not.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, key: &RequestContext) -> usize {
        self.served
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(key)
            .copied()
            .unwrap_or(0)
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(
        &self,
        _messages: &[ChatMessage],
        _config: &GenerationConfig,
        context: &RequestContext,
    ) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut served = self.served.lock().unwrap_or_else(|e| e.into_inner());
        let n = served.entry(context.clone()).or_insert(0);
        *n += 1;
        let script = self.responses.get(context).ok_or_else(|| {
            BackendError(format!(
                "no scripted response for patient {} trial {} ({})",
                context.patient_id, context.trial_id, context.kind
            ))
        })?;
        Ok(script[(*n - 1).min(script.len() - 1)].clone())
    }
}

/// Client for `POST {endpoint}` with an OpenAI-style chat-completion body.
pub struct HttpBackend {
    name: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    seed: Option<u64>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key: Option<String>,
        seed: Option<u64>,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            name: model.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            seed,
            agent,
        }
    }

    /// Reads the credential from [`API_KEY_ENV`]; a missing variable means
    /// requests go out without an `Authorization` header.
    pub fn from_env(endpoint: &str, model: &str, seed: Option<u64>, timeout: Duration) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, model, key, seed, timeout)
    }

    pub fn request_body(&self, messages: &[ChatMessage], config: &GenerationConfig) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": config.temperature,
            "top_p": config.top_p,
        });
        if let Some(seed) = self.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

/// The first choice's message content from a chat-completion response.
pub fn completion_text(response: &Value) -> Result<String, BackendError> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError("response has no choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        config: &GenerationConfig,
        _context: &RequestContext,
    ) -> Result<String, BackendError> {
        let body = self.request_body(messages, config).to_string();
        let mut request = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(body.as_bytes())
            .map_err(|e| BackendError(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError(format!("reading response: {e}")))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(BackendError(format!("HTTP {status}: {snippet}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError(format!("response is not JSON: {e}")))?;
        completion_text(&value)
    }
}
