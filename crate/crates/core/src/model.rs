//! Shared domain vocabulary.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::scoring::{compute_scores, Scores};

/// Upper bound on the evidence list of a single criterion assessment.
pub const MAX_EVIDENCE_IDS: usize = 20;

/// Whether a criterion is an inclusion or an exclusion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Inclusion,
    Exclusion,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 2] = [CriterionKind::Inclusion, CriterionKind::Exclusion];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionKind::Inclusion => "inclusion",
            CriterionKind::Exclusion => "exclusion",
        }
    }

    /// The three labels an assessment of this kind may carry.
    pub fn legal_labels(self) -> [EligibilityLabel; 3] {
        match self {
            CriterionKind::Inclusion => [
                EligibilityLabel::Included,
                EligibilityLabel::NotIncluded,
                EligibilityLabel::NoRelevantInformation,
            ],
            CriterionKind::Exclusion => [
                EligibilityLabel::Excluded,
                EligibilityLabel::NotExcluded,
                EligibilityLabel::NoRelevantInformation,
            ],
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriterionKind {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inclusion" => Ok(CriterionKind::Inclusion),
            "exclusion" => Ok(CriterionKind::Exclusion),
            other => Err(UnknownVariant(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown value {0:?}")]
pub struct UnknownVariant(pub String);

/// Per-criterion eligibility verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EligibilityLabel {
    #[serde(rename = "included")]
    Included,
    #[serde(rename = "not included")]
    NotIncluded,
    #[serde(rename = "excluded")]
    Excluded,
    #[serde(rename = "not excluded")]
    NotExcluded,
    #[serde(rename = "no relevant information")]
    NoRelevantInformation,
}

impl EligibilityLabel {
    pub const ALL: [EligibilityLabel; 5] = [
        EligibilityLabel::Included,
        EligibilityLabel::NotIncluded,
        EligibilityLabel::Excluded,
        EligibilityLabel::NotExcluded,
        EligibilityLabel::NoRelevantInformation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EligibilityLabel::Included => "included",
            EligibilityLabel::NotIncluded => "not included",
            EligibilityLabel::Excluded => "excluded",
            EligibilityLabel::NotExcluded => "not excluded",
            EligibilityLabel::NoRelevantInformation => "no relevant information",
        }
    }

    pub fn allowed_for(self, kind: CriterionKind) -> bool {
        kind.legal_labels().contains(&self)
    }
}

impl fmt::Display for EligibilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EligibilityLabel {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EligibilityLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownVariant(s.to_owned()))
    }
}

/// A patient summary, pre-segmented into sentences indexed from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPatientNote")]
pub struct PatientNote {
    patient_id: String,
    sentences: Vec<String>,
}

#[derive(Deserialize)]
struct RawPatientNote {
    patient_id: String,
    sentences: Vec<String>,
}

impl TryFrom<RawPatientNote> for PatientNote {
    type Error = ModelError;

    fn try_from(raw: RawPatientNote) -> Result<Self, Self::Error> {
        PatientNote::new(raw.patient_id, raw.sentences)
    }
}

impl PatientNote {
    pub fn new(patient_id: impl Into<String>, sentences: Vec<String>) -> Result<Self, ModelError> {
        let patient_id = patient_id.into();
        if patient_id.is_empty() {
            return Err(ModelError::EmptyId("patient_id"));
        }
        if sentences.is_empty() {
            return Err(ModelError::EmptyNote(patient_id));
        }
        Ok(PatientNote {
            patient_id,
            sentences,
        })
    }

    /// Builds a note from free text with [`split_sentences`].
    pub fn from_text(patient_id: impl Into<String>, text: &str) -> Result<Self, ModelError> {
        PatientNote::new(patient_id, split_sentences(text))
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_id(&self, id: i64) -> bool {
        usize::try_from(id).is_ok_and(|i| i < self.sentences.len())
    }

    pub fn word_count(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| s.split_whitespace().count())
            .sum()
    }
}

/// Naive splitter on ". " boundaries. Only meant for ad-hoc ingestion of
/// unsegmented text; gold data is expected to arrive pre-segmented.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while let Some(pos) = rest.find(". ") {
        let sentence = rest[..=pos].trim();
        if !sentence.is_empty() {
            out.push(sentence.to_string());
        }
        rest = rest[pos + 2..].trim_start();
    }
    let tail = rest.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalTrial {
    pub trial_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub target_diseases: Vec<String>,
    #[serde(default)]
    pub interventions: Vec<String>,
    #[serde(default)]
    pub inclusion_text: String,
    #[serde(default)]
    pub exclusion_text: String,
}

impl ClinicalTrial {
    pub fn criteria_text(&self, kind: CriterionKind) -> &str {
        match kind {
            CriterionKind::Inclusion => &self.inclusion_text,
            CriterionKind::Exclusion => &self.exclusion_text,
        }
    }

    pub fn has_criteria(&self, kind: CriterionKind) -> bool {
        !self.criteria_text(kind).trim().is_empty()
    }
}

/// One criterion's verdict as emitted by a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionAssessment {
    pub criterion_text: String,
    pub kind: CriterionKind,
    pub explanation: String,
    /// Raw sentence ids. The output schema only requires integers, so these
    /// may be negative or past the end of the note until the matching layer
    /// drops them.
    pub evidence_ids: Vec<i64>,
    pub label: EligibilityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooManyEvidenceIds {
        count: usize,
    },
    EvidenceOutOfRange {
        id: i64,
        sentences: usize,
    },
    LabelKindMismatch {
        kind: CriterionKind,
        label: EligibilityLabel,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooManyEvidenceIds { count } => {
                write!(f, "evidence count > {MAX_EVIDENCE_IDS} (got {count})")
            }
            Violation::EvidenceOutOfRange { id, sentences } => {
                write!(f, "evidence id {id} outside note of {sentences} sentences")
            }
            Violation::LabelKindMismatch { kind, label } => {
                write!(f, "label/kind mismatch: {label:?} on {kind} criterion")
            }
        }
    }
}

fn check_evidence<I>(ids: I, count: usize, note: &PatientNote, out: &mut Vec<Violation>)
where
    I: IntoIterator<Item = i64>,
{
    if count > MAX_EVIDENCE_IDS {
        out.push(Violation::TooManyEvidenceIds { count });
    }
    for id in ids {
        if !note.contains_id(id) {
            out.push(Violation::EvidenceOutOfRange {
                id,
                sentences: note.len(),
            });
        }
    }
}

/// Checks every [`CriterionAssessment`] invariant against `note`. The
/// returned list is empty iff the assessment is valid.
pub fn validate_assessment(assessment: &CriterionAssessment, note: &PatientNote) -> Vec<Violation> {
    let mut out = Vec::new();
    check_evidence(
        assessment.evidence_ids.iter().copied(),
        assessment.evidence_ids.len(),
        note,
        &mut out,
    );
    if !assessment.label.allowed_for(assessment.kind) {
        out.push(Violation::LabelKindMismatch {
            kind: assessment.kind,
            label: assessment.label,
        });
    }
    out
}

/// All criterion verdicts for one patient/trial pair, with the derived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrialAssessment")]
pub struct TrialAssessment {
    patient_id: String,
    trial_id: String,
    inclusion: Vec<CriterionAssessment>,
    exclusion: Vec<CriterionAssessment>,
    rank_score: f64,
    exclusion_score: f64,
}

#[derive(Deserialize)]
struct RawTrialAssessment {
    patient_id: String,
    trial_id: String,
    inclusion: Vec<CriterionAssessment>,
    exclusion: Vec<CriterionAssessment>,
    rank_score: f64,
    exclusion_score: f64,
}

impl TryFrom<RawTrialAssessment> for TrialAssessment {
    type Error = ModelError;

    fn try_from(raw: RawTrialAssessment) -> Result<Self, Self::Error> {
        let built =
            TrialAssessment::new(raw.patient_id, raw.trial_id, raw.inclusion, raw.exclusion)?;
        if built.rank_score != raw.rank_score || built.exclusion_score != raw.exclusion_score {
            return Err(ModelError::ScoreMismatch {
                trial_id: built.trial_id,
            });
        }
        Ok(built)
    }
}

impl TrialAssessment {
    pub fn new(
        patient_id: impl Into<String>,
        trial_id: impl Into<String>,
        inclusion: Vec<CriterionAssessment>,
        exclusion: Vec<CriterionAssessment>,
    ) -> Result<Self, ModelError> {
        let check = |list: &[CriterionAssessment], kind: CriterionKind| {
            list.iter().try_for_each(|a| {
                if a.kind != kind {
                    Err(ModelError::WrongKindInList {
                        criterion: a.criterion_text.clone(),
                        expected: kind,
                    })
                } else if !a.label.allowed_for(kind) {
                    Err(ModelError::LabelKindMismatch {
                        criterion: a.criterion_text.clone(),
                        label: a.label,
                    })
                } else {
                    Ok(())
                }
            })
        };
        check(&inclusion, CriterionKind::Inclusion)?;
        check(&exclusion, CriterionKind::Exclusion)?;
        let Scores {
            rank_score,
            exclusion_score,
        } = compute_scores(&inclusion, &exclusion);
        Ok(TrialAssessment {
            patient_id: patient_id.into(),
            trial_id: trial_id.into(),
            inclusion,
            exclusion,
            rank_score,
            exclusion_score,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn inclusion(&self) -> &[CriterionAssessment] {
        &self.inclusion
    }

    pub fn exclusion(&self) -> &[CriterionAssessment] {
        &self.exclusion
    }

    pub fn criteria(&self, kind: CriterionKind) -> &[CriterionAssessment] {
        match kind {
            CriterionKind::Inclusion => &self.inclusion,
            CriterionKind::Exclusion => &self.exclusion,
        }
    }

    pub fn all_criteria(&self) -> impl Iterator<Item = &CriterionAssessment> {
        self.inclusion.iter().chain(self.exclusion.iter())
    }

    pub fn rank_score(&self) -> f64 {
        self.rank_score
    }

    pub fn exclusion_score(&self) -> f64 {
        self.exclusion_score
    }
}

/// Graded relevance of a trial for a patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    Irrelevant,
    Excluded,
    Eligible,
}

impl Relevance {
    pub fn grade(self) -> u8 {
        match self {
            Relevance::Irrelevant => 0,
            Relevance::Excluded => 1,
            Relevance::Eligible => 2,
        }
    }

    pub fn from_grade(grade: u8) -> Option<Self> {
        match grade {
            0 => Some(Relevance::Irrelevant),
            1 => Some(Relevance::Excluded),
            2 => Some(Relevance::Eligible),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub patient_id: String,
    pub trial_id: String,
    pub relevance: Relevance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningMode {
    Explicit,
    Implicit,
}

/// Error categories used when annotating a judged model mistake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    ImplicitFailure,
    LackOfInformation,
    WrongOutcome,
    ExplanationOutputMismatch,
    ExpertOpinionNeeded,
    NegatedCriteria,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCriterionAnnotation {
    pub annotation_id: String,
    pub patient_id: String,
    pub trial_id: String,
    pub criterion_text: String,
    pub kind: CriterionKind,
    pub gold_label: EligibilityLabel,
    pub gold_evidence_ids: Vec<usize>,
    pub reasoning_mode: ReasoningMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<ErrorType>,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

impl GoldCriterionAnnotation {
    /// Same invariants as [`validate_assessment`], applied to the gold side.
    pub fn validate(&self, note: &PatientNote) -> Vec<Violation> {
        let mut out = Vec::new();
        check_evidence(
            self.gold_evidence_ids
                .iter()
                .map(|&i| i64::try_from(i).unwrap_or(i64::MAX)),
            self.gold_evidence_ids.len(),
            note,
            &mut out,
        );
        if !self.gold_label.allowed_for(self.kind) {
            out.push(Violation::LabelKindMismatch {
                kind: self.kind,
                label: self.gold_label,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("{0} must not be empty")]
    EmptyId(&'static str),
    #[error("patient {0} has no sentences")]
    EmptyNote(String),
    #[error("criterion {criterion:?} filed under the {expected} list has the wrong kind")]
    WrongKindInList {
        criterion: String,
        expected: CriterionKind,
    },
    #[error("criterion {criterion:?} carries label {label:?} which its kind does not allow")]
    LabelKindMismatch {
        criterion: String,
        label: EligibilityLabel,
    },
    #[error("stored scores for trial {trial_id} do not match its criteria")]
    ScoreMismatch { trial_id: String },
}
