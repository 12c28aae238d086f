//! Chat backend port and the validate-and-retry loop.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CriterionAssessment, CriterionKind};
use crate::schema::{extract_fenced_payload, validate_payload, ExtractionError, PayloadError};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;
pub const DEFAULT_TOP_P: f64 = 0.95;
/// Temperature for API-style backends where determinism is wanted.
pub const DETERMINISTIC_TEMPERATURE: f64 = 0.0;
/// Temperature for open-weight chat models, which collapse less often when
/// sampled slightly.
pub const OPEN_WEIGHT_TEMPERATURE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// One worked user/assistant exchange shown before the real request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_attempts: u32,
    /// Prime base models with the assistant turn; fine-tuned models go without.
    pub include_exemplar: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar: Option<Exemplar>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: DETERMINISTIC_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            include_exemplar: true,
            exemplar: None,
        }
    }
}

impl GenerationConfig {
    pub fn open_weight() -> Self {
        GenerationConfig {
            temperature: OPEN_WEIGHT_TEMPERATURE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::TopP(self.top_p));
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::MaxAttempts);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("top_p must be in (0, 1], got {0}")]
    TopP(f64),
    #[error("max_attempts must be at least 1")]
    MaxAttempts,
}

/// Identifies the pair a request belongs to. Real backends ignore it;
/// scripted backends use it to pick a response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestContext {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// A chat-completion model. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn generate(
        &self,
        messages: &[ChatMessage],
        config: &GenerationConfig,
        context: &RequestContext,
    ) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        config: &GenerationConfig,
        context: &RequestContext,
    ) -> Result<String, BackendError> {
        (**self).generate(messages, config, context)
    }
}

/// Why a single attempt did not yield a usable answer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttemptError {
    #[error("backend: {0}")]
    Backend(BackendError),
    #[error("extraction: {0}")]
    Extraction(ExtractionError),
    #[error("{0}")]
    Payload(PayloadError),
}

/// Audit entry for one backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub raw: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub assessments: Vec<CriterionAssessment>,
    /// The extracted payload that passed validation.
    pub payload: String,
    pub attempts_used: u32,
    pub log: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOutputFailure {
    pub attempts: u32,
    pub last_raw: Option<String>,
    pub last_error: AttemptError,
    pub log: Vec<AttemptRecord>,
}

impl fmt::Display for StructuredOutputFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no valid structured output after {} attempts; last error: {}",
            self.attempts, self.last_error
        )
    }
}

impl core::error::Error for StructuredOutputFailure {}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    StructuredOutput(#[from] StructuredOutputFailure),
}

fn try_parse(
    raw: &str,
    kind: CriterionKind,
) -> Result<(String, Vec<CriterionAssessment>), AttemptError> {
    let payload = extract_fenced_payload(raw).map_err(AttemptError::Extraction)?;
    let assessments = validate_payload(payload, kind).map_err(AttemptError::Payload)?;
    Ok((payload.to_owned(), assessments))
}

/// Calls `backend` with identical messages and config until the answer
/// extracts and validates, up to `config.max_attempts` calls. Transport
/// errors use up an attempt like any other failure.
pub fn generate_validated<B: ChatBackend + ?Sized>(
    backend: &B,
    messages: &[ChatMessage],
    kind: CriterionKind,
    config: &GenerationConfig,
    context: &RequestContext,
) -> Result<Validated, GenerationError> {
    config.validate()?;
    let mut log = Vec::new();
    let mut last_raw = None;
    let mut last_error = None;
    for attempt in 1..=config.max_attempts {
        let outcome = backend
            .generate(messages, config, context)
            .map_err(AttemptError::Backend)
            .and_then(|raw| {
                last_raw = Some(raw.clone());
                try_parse(&raw, kind)
            });
        let raw_for_log = match &outcome {
            Err(AttemptError::Backend(_)) => None,
            _ => last_raw.clone(),
        };
        match outcome {
            Ok((payload, assessments)) => {
                log.push(AttemptRecord {
                    attempt,
                    raw: raw_for_log,
                    error: None,
                });
                return Ok(Validated {
                    assessments,
                    payload,
                    attempts_used: attempt,
                    log,
                });
            }
            Err(e) => {
                log.push(AttemptRecord {
                    attempt,
                    raw: raw_for_log,
                    error: Some(e.to_string()),
                });
                last_error = Some(e);
            }
        }
    }
    Err(StructuredOutputFailure {
        attempts: config.max_attempts,
        last_raw,
        last_error: last_error.expect("max_attempts >= 1"),
        log,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::sync::atomic::{AtomicU32, Ordering};

    const VALID: &str = "```json\n{\"Age > 18\": [\"ok\", [0], \"included\"]}\n```";

    struct FailThenSucceed {
        failures: u32,
        calls: AtomicU32,
    }

    impl ChatBackend for FailThenSucceed {
        fn name(&self) -> &str {
            "scripted"
        }

        fn generate(
            &self,
            _: &[ChatMessage],
            _: &GenerationConfig,
            _: &RequestContext,
        ) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                if n.is_multiple_of(2) {
                    Ok("sorry, I cannot answer".into())
                } else {
                    Err(BackendError("timeout".into()))
                }
            } else {
                Ok(VALID.into())
            }
        }
    }

    fn ctx() -> RequestContext {
        RequestContext {
            patient_id: "p".into(),
            trial_id: "t".into(),
            kind: CriterionKind::Inclusion,
        }
    }

    fn run(failures: u32) -> (Result<Validated, GenerationError>, u32) {
        let backend = FailThenSucceed {
            failures,
            calls: AtomicU32::new(0),
        };
        let out = generate_validated(
            &backend,
            &[ChatMessage::user("hi")],
            CriterionKind::Inclusion,
            &GenerationConfig::default(),
            &ctx(),
        );
        (out, backend.calls.load(Ordering::SeqCst))
    }

    #[test]
    fn immediate_success() {
        let (out, calls) = run(0);
        let v = out.unwrap();
        assert_eq!((v.attempts_used, calls), (1, 1));
        assert_eq!(v.assessments.len(), 1);
    }

    #[test]
    fn fifth_attempt_succeeds() {
        let (out, calls) = run(4);
        assert_eq!(out.unwrap().attempts_used, 5);
        assert_eq!(calls, 5);
    }

    #[test]
    fn five_failures_exhaust() {
        let (out, calls) = run(5);
        assert_eq!(calls, 5);
        match out {
            Err(GenerationError::StructuredOutput(f)) => {
                assert_eq!(f.attempts, 5);
                assert_eq!(f.log.len(), 5);
                // the fifth call (index 4) returned prose, not a transport error
                assert!(matches!(f.last_error, AttemptError::Extraction(_)));
                assert_eq!(f.last_raw.as_deref(), Some("sorry, I cannot answer"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_attempts_is_a_config_error() {
        let backend = FailThenSucceed {
            failures: 0,
            calls: AtomicU32::new(0),
        };
        let cfg = GenerationConfig {
            max_attempts: 0,
            ..GenerationConfig::default()
        };
        let out = generate_validated(&backend, &[], CriterionKind::Inclusion, &cfg, &ctx());
        assert_eq!(out, Err(GenerationError::Config(ConfigError::MaxAttempts)));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn defaults() {
        let cfg = GenerationConfig::default();
        assert_eq!(cfg.max_attempts, 5);
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.top_p, 0.95);
        assert_eq!(GenerationConfig::open_weight().temperature, 0.4);
        assert_eq!(
            GenerationConfig {
                top_p: 0.0,
                ..cfg.clone()
            }
            .validate(),
            Err(ConfigError::TopP(0.0))
        );
    }
}
