//! Extraction and validation of structured model output.
//!
//! A model answers with a JSON object mapping each criterion it identified to
//! a three-element array:
//!
//! ```json
//! {"Age > 18": ["patient is 20", [0], "included"]}
//! ```
//!
//! The checks here mirror the draft-07 JSON schema the output is held to:
//! every property name must match `^.+$`, every value is an array of exactly
//! three items (string, array of at most 20 integers, one of the five label
//! strings) and no other properties are allowed. On top of the schema the
//! label must be legal for the criterion kind being assessed.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Number, Value};

use crate::model::{CriterionAssessment, CriterionKind, EligibilityLabel, MAX_EVIDENCE_IDS};

const FENCE: &str = "```";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no fenced block and the text is not a bare JSON object")]
pub struct ExtractionError;

/// Returns the content of the first triple-backtick fence, with an optional
/// `json` tag after the opening fence removed. Text without any fence is
/// returned unchanged when it is a bare JSON object. An opening fence with no
/// closing fence yields everything after it.
pub fn extract_fenced_payload(raw: &str) -> Result<&str, ExtractionError> {
    let Some(open) = raw.find(FENCE) else {
        return match serde_json::from_str::<Value>(raw) {
            Ok(Value::Object(_)) => Ok(raw),
            _ => Err(ExtractionError),
        };
    };
    let mut body = &raw[open + FENCE.len()..];
    if let Some(close) = body.find(FENCE) {
        body = &body[..close];
    }
    let body = body.strip_prefix("json").unwrap_or(body);
    Ok(body.trim())
}

/// Which part of the output schema a payload broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    /// Top level is not a JSON object.
    NotAnObject,
    /// Property name does not match `^.+$`, so it falls under `additionalProperties: false`.
    AdditionalProperty,
    NotAnArray,
    MinItems {
        len: usize,
    },
    MaxItems {
        len: usize,
    },
    ExplanationNotString,
    EvidenceNotArray,
    EvidenceMaxItems {
        len: usize,
    },
    EvidenceNotInteger {
        position: usize,
    },
    LabelNotString,
    LabelNotInEnum {
        value: String,
    },
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::NotAnObject => f.write_str("type object"),
            SchemaViolation::AdditionalProperty => f.write_str("additionalProperties false"),
            SchemaViolation::NotAnArray => f.write_str("type array"),
            SchemaViolation::MinItems { len } => write!(f, "minItems 3 (got {len})"),
            SchemaViolation::MaxItems { len } => write!(f, "maxItems 3 (got {len})"),
            SchemaViolation::ExplanationNotString => f.write_str("items[0] type string"),
            SchemaViolation::EvidenceNotArray => f.write_str("items[1] type array"),
            SchemaViolation::EvidenceMaxItems { len } => {
                write!(f, "items[1] maxItems {MAX_EVIDENCE_IDS} (got {len})")
            }
            SchemaViolation::EvidenceNotInteger { position } => {
                write!(f, "items[1][{position}] type integer")
            }
            SchemaViolation::LabelNotString => f.write_str("items[2] type string"),
            SchemaViolation::LabelNotInEnum { value } => write!(f, "items[2] enum ({value:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload is not valid JSON: {0}")]
    Parse(String),
    #[error("schema violation{}: {violation}", key.as_deref().map(|k| alloc::format!(" at {k:?}")).unwrap_or_default())]
    Schema {
        key: Option<String>,
        violation: SchemaViolation,
    },
    #[error("criterion {key:?} has label {label:?} which a {kind} criterion cannot carry")]
    KindViolation {
        key: String,
        kind: CriterionKind,
        label: EligibilityLabel,
    },
}

impl PayloadError {
    fn schema(key: &str, violation: SchemaViolation) -> Self {
        PayloadError::Schema {
            key: Some(key.to_owned()),
            violation,
        }
    }
}

/// `^.+$` under ECMA-262 semantics: at least one character and no line terminator.
fn key_matches_pattern(key: &str) -> bool {
    !key.is_empty()
        && !key
            .chars()
            .any(|c| matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}'))
}

/// JSON-schema `integer`: any number with a zero fractional part. Values
/// outside `i64` saturate; they are out of range for any note anyway.
fn as_schema_integer(n: &Number) -> Option<i64> {
    if let Some(i) = n.as_i64() {
        return Some(i);
    }
    if n.as_u64().is_some() {
        return Some(i64::MAX);
    }
    let f = n.as_f64()?;
    if f.is_finite() && libm::trunc(f) == f {
        Some(if f >= i64::MAX as f64 {
            i64::MAX
        } else if f <= i64::MIN as f64 {
            i64::MIN
        } else {
            f as i64
        })
    } else {
        None
    }
}

fn validate_entry(
    key: &str,
    value: &Value,
    kind: CriterionKind,
) -> Result<CriterionAssessment, PayloadError> {
    if !key_matches_pattern(key) {
        return Err(PayloadError::schema(
            key,
            SchemaViolation::AdditionalProperty,
        ));
    }
    let items = value
        .as_array()
        .ok_or_else(|| PayloadError::schema(key, SchemaViolation::NotAnArray))?;
    if items.len() < 3 {
        return Err(PayloadError::schema(
            key,
            SchemaViolation::MinItems { len: items.len() },
        ));
    }
    if items.len() > 3 {
        return Err(PayloadError::schema(
            key,
            SchemaViolation::MaxItems { len: items.len() },
        ));
    }

    let explanation = items[0]
        .as_str()
        .ok_or_else(|| PayloadError::schema(key, SchemaViolation::ExplanationNotString))?;

    let raw_ids = items[1]
        .as_array()
        .ok_or_else(|| PayloadError::schema(key, SchemaViolation::EvidenceNotArray))?;
    if raw_ids.len() > MAX_EVIDENCE_IDS {
        return Err(PayloadError::schema(
            key,
            SchemaViolation::EvidenceMaxItems { len: raw_ids.len() },
        ));
    }
    let evidence_ids = raw_ids
        .iter()
        .enumerate()
        .map(|(position, v)| {
            match v {
                Value::Number(n) => as_schema_integer(n),
                _ => None,
            }
            .ok_or_else(|| {
                PayloadError::schema(key, SchemaViolation::EvidenceNotInteger { position })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let label_str = items[2]
        .as_str()
        .ok_or_else(|| PayloadError::schema(key, SchemaViolation::LabelNotString))?;
    let label: EligibilityLabel = label_str.parse().map_err(|_| {
        PayloadError::schema(
            key,
            SchemaViolation::LabelNotInEnum {
                value: label_str.to_owned(),
            },
        )
    })?;
    if !label.allowed_for(kind) {
        return Err(PayloadError::KindViolation {
            key: key.to_owned(),
            kind,
            label,
        });
    }

    Ok(CriterionAssessment {
        criterion_text: key.trim().to_owned(),
        kind,
        explanation: explanation.to_owned(),
        evidence_ids,
        label,
    })
}

/// Parses `payload` and checks it against the output schema and the kind
/// restriction, returning one assessment per property in key order.
///
/// Schema violations are reported before kind violations for the same key;
/// keys are checked in sorted order and the first failure wins.
pub fn validate_payload(
    payload: &str,
    kind: CriterionKind,
) -> Result<Vec<CriterionAssessment>, PayloadError> {
    let value: Value =
        serde_json::from_str(payload).map_err(|e| PayloadError::Parse(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(PayloadError::Schema {
            key: None,
            violation: SchemaViolation::NotAnObject,
        });
    };
    map.iter()
        .map(|(key, value)| validate_entry(key, value, kind))
        .collect()
}

/// Serializes assessments back into the payload shape accepted by
/// [`validate_payload`].
pub fn render_payload(assessments: &[CriterionAssessment]) -> String {
    let mut map = Map::new();
    for a in assessments {
        map.insert(
            a.criterion_text.clone(),
            Value::Array(alloc::vec![
                Value::String(a.explanation.clone()),
                Value::Array(a.evidence_ids.iter().map(|&i| Value::from(i)).collect()),
                Value::String(a.label.as_str().to_owned()),
            ]),
        );
    }
    // Backticks only occur inside JSON strings; escaping them keeps the
    // payload safe to wrap in a code fence.
    Value::Object(map).to_string().replace('`', "\\u0060")
}

/// Wraps a payload in a `json`-tagged fence. Payloads from
/// [`render_payload`] never contain a backtick, so they extract back intact.
pub fn fence_payload(payload: &str) -> String {
    alloc::format!("```json\n{payload}\n```")
}
