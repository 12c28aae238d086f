//! Teacher-output collection for fine-tuning data.
//!
//! Each record is a single-turn dialogue: the assessment instruction as the
//! system turn, the rendered note and trial as the user turn, and the
//! teacher's validated JSON (fenced) as the assistant turn. Inclusion and
//! exclusion passes become separate records.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::gateway::{
    generate_validated, ChatBackend, ChatMessage, GenerationConfig, RequestContext, Role,
};
use crate::model::CriterionKind;
use crate::prompt::render_prompt;
use crate::schema::fence_payload;

pub const DEFAULT_SAMPLE_SIZE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub patient_id: String,
    pub trial_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillMeta {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
    pub teacher: String,
    pub attempts_used: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ExportLine", try_from = "ExportLine")]
pub struct DistillRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
    pub meta: DistillMeta,
}

/// Wire shape: `{"messages": [system, user, assistant], "meta": {...}}`.
#[derive(Serialize, Deserialize)]
struct ExportLine {
    messages: Vec<ChatMessage>,
    meta: DistillMeta,
}

impl From<DistillRecord> for ExportLine {
    fn from(r: DistillRecord) -> Self {
        ExportLine {
            messages: alloc::vec![
                ChatMessage::system(r.system),
                ChatMessage::user(r.user),
                ChatMessage::assistant(r.assistant),
            ],
            meta: r.meta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected system, user and assistant messages in that order")]
pub struct MalformedRecord;

impl TryFrom<ExportLine> for DistillRecord {
    type Error = MalformedRecord;

    fn try_from(line: ExportLine) -> Result<Self, Self::Error> {
        let [system, user, assistant]: [ChatMessage; 3] =
            line.messages.try_into().map_err(|_| MalformedRecord)?;
        if system.role != Role::System
            || user.role != Role::User
            || assistant.role != Role::Assistant
        {
            return Err(MalformedRecord);
        }
        Ok(DistillRecord {
            system: system.content,
            user: user.content,
            assistant: assistant.content,
            meta: line.meta,
        })
    }
}

/// Seeded uniform sample of judged pairs, without replacement. `n` is
/// capped at the number of judged pairs; the result is sorted.
pub fn sample_pairs(train: &Corpus, n: usize, seed: u64) -> Vec<PairId> {
    let mut all: Vec<PairId> = train
        .judgments()
        .iter()
        .map(|j| PairId {
            patient_id: j.patient_id.clone(),
            trial_id: j.trial_id.clone(),
        })
        .collect();
    all.sort();
    let amount = n.min(all.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, all.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillFailure {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: Option<CriterionKind>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DistillOutcome {
    pub records: Vec<DistillRecord>,
    pub failures: Vec<DistillFailure>,
}

impl DistillOutcome {
    pub fn merge(&mut self, other: DistillOutcome) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

/// Records for one pair. Exemplars are always off: the records train a
/// model that will be prompted without them.
pub fn build_pair_records<B: ChatBackend + ?Sized>(
    pair: &PairId,
    corpus: &Corpus,
    backend: &B,
    config: &GenerationConfig,
) -> DistillOutcome {
    let mut out = DistillOutcome::default();
    let (Some(note), Some(trial)) = (
        corpus.patient(&pair.patient_id),
        corpus.trial(&pair.trial_id),
    ) else {
        out.failures.push(DistillFailure {
            patient_id: pair.patient_id.clone(),
            trial_id: pair.trial_id.clone(),
            kind: None,
            reason: "pair not found in corpus".into(),
        });
        return out;
    };
    let config = GenerationConfig {
        include_exemplar: false,
        ..config.clone()
    };
    for kind in CriterionKind::ALL {
        let Some(messages) = render_prompt(note, trial, kind, &config) else {
            continue;
        };
        let context = RequestContext {
            patient_id: pair.patient_id.clone(),
            trial_id: pair.trial_id.clone(),
            kind,
        };
        match generate_validated(backend, &messages, kind, &config, &context) {
            Ok(validated) => {
                let mut turns = messages.into_iter();
                let system = turns.next().map(|m| m.content).unwrap_or_default();
                let user = turns.next().map(|m| m.content).unwrap_or_default();
                out.records.push(DistillRecord {
                    system,
                    user,
                    assistant: fence_payload(&validated.payload),
                    meta: DistillMeta {
                        patient_id: pair.patient_id.clone(),
                        trial_id: pair.trial_id.clone(),
                        kind,
                        teacher: backend.name().to_string(),
                        attempts_used: validated.attempts_used,
                    },
                });
            }
            Err(e) => out.failures.push(DistillFailure {
                patient_id: pair.patient_id.clone(),
                trial_id: pair.trial_id.clone(),
                kind: Some(kind),
                reason: e.to_string(),
            }),
        }
    }
    out
}

pub fn build_records<B: ChatBackend + ?Sized>(
    pairs: &[PairId],
    corpus: &Corpus,
    backend: &B,
    config: &GenerationConfig,
) -> DistillOutcome {
    let mut out = DistillOutcome::default();
    for pair in pairs {
        out.merge(build_pair_records(pair, corpus, backend, config));
    }
    out
}
