//! Per-pair assessment and per-patient trial ranking.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::gateway::{
    generate_validated, AttemptRecord, ChatBackend, ChatMessage, GenerationConfig, GenerationError,
    RequestContext,
};
use crate::model::{
    ClinicalTrial, CriterionAssessment, CriterionKind, PatientNote, TrialAssessment,
};
use crate::prompt::render_prompt;

/// An evidence id dropped because it does not point into the note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceWarning {
    pub kind: CriterionKind,
    pub criterion_text: String,
    pub evidence_id: i64,
    pub note_sentences: usize,
}

/// Messages and backend responses for one criterion-kind pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
    pub messages: Vec<ChatMessage>,
    pub attempts: Vec<AttemptRecord>,
    /// Validated payload, kept for downstream export.
    pub payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PairResult {
    Assessed(TrialAssessment),
    Failed(PairFailure),
}

impl PairResult {
    pub fn patient_id(&self) -> &str {
        match self {
            PairResult::Assessed(a) => a.patient_id(),
            PairResult::Failed(f) => &f.patient_id,
        }
    }

    pub fn trial_id(&self) -> &str {
        match self {
            PairResult::Assessed(a) => a.trial_id(),
            PairResult::Failed(f) => &f.trial_id,
        }
    }

    pub fn assessment(&self) -> Option<&TrialAssessment> {
        match self {
            PairResult::Assessed(a) => Some(a),
            PairResult::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub result: PairResult,
    pub warnings: Vec<EvidenceWarning>,
    pub transcripts: Vec<Transcript>,
}

/// Drops evidence ids that do not index into `note`, recording each one.
pub fn clamp_evidence(
    assessments: &mut [CriterionAssessment],
    note: &PatientNote,
    warnings: &mut Vec<EvidenceWarning>,
) {
    for a in assessments {
        let (kept, dropped): (Vec<i64>, Vec<i64>) =
            a.evidence_ids.iter().partition(|&&id| note.contains_id(id));
        for evidence_id in dropped {
            warnings.push(EvidenceWarning {
                kind: a.kind,
                criterion_text: a.criterion_text.clone(),
                evidence_id,
                note_sentences: note.len(),
            });
        }
        a.evidence_ids = kept;
    }
}

/// Runs the inclusion and exclusion passes for one pair and scores the result.
///
/// A kind with no criteria text contributes an empty list without calling
/// the backend. If either pass exhausts its retries the pair is reported
/// as failed.
pub fn assess_pair<B: ChatBackend + ?Sized>(
    note: &PatientNote,
    trial: &ClinicalTrial,
    backend: &B,
    config: &GenerationConfig,
) -> PairReport {
    let mut warnings = Vec::new();
    let mut transcripts = Vec::new();
    let mut lists: [Vec<CriterionAssessment>; 2] = [Vec::new(), Vec::new()];

    for (slot, kind) in CriterionKind::ALL.into_iter().enumerate() {
        let Some(messages) = render_prompt(note, trial, kind, config) else {
            continue;
        };
        let context = RequestContext {
            patient_id: note.patient_id().to_string(),
            trial_id: trial.trial_id.clone(),
            kind,
        };
        let outcome = generate_validated(backend, &messages, kind, config, &context);
        let mut transcript = Transcript {
            patient_id: context.patient_id.clone(),
            trial_id: context.trial_id.clone(),
            kind,
            messages,
            attempts: Vec::new(),
            payload: None,
        };
        match outcome {
            Ok(validated) => {
                transcript.attempts = validated.log;
                transcript.payload = Some(validated.payload);
                transcripts.push(transcript);
                let mut list = validated.assessments;
                clamp_evidence(&mut list, note, &mut warnings);
                lists[slot] = list;
            }
            Err(err) => {
                if let GenerationError::StructuredOutput(f) = &err {
                    transcript.attempts = f.log.clone();
                }
                transcripts.push(transcript);
                return PairReport {
                    result: PairResult::Failed(PairFailure {
                        patient_id: context.patient_id,
                        trial_id: context.trial_id,
                        kind,
                        reason: err.to_string(),
                    }),
                    warnings,
                    transcripts,
                };
            }
        }
    }

    let [inclusion, exclusion] = lists;
    let assessment = TrialAssessment::new(
        note.patient_id(),
        trial.trial_id.clone(),
        inclusion,
        exclusion,
    )
    .expect("validated payloads respect kind restrictions");
    PairReport {
        result: PairResult::Assessed(assessment),
        warnings,
        transcripts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub trial_id: String,
    /// `None` for pairs whose assessment failed; those rank last.
    pub rank_score: Option<f64>,
    pub exclusion_score: Option<f64>,
}

impl RankEntry {
    /// Rank score with failed pairs mapped to negative infinity.
    pub fn sort_score(&self) -> f64 {
        self.rank_score.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Trials for one patient, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub patient_id: String,
    pub entries: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("assessment for trial {trial_id} belongs to patient {found}, not {expected}")]
pub struct MixedPatients {
    pub expected: String,
    pub found: String,
    pub trial_id: String,
}

fn entry_order(a: &RankEntry, b: &RankEntry) -> Ordering {
    b.sort_score()
        .total_cmp(&a.sort_score())
        .then_with(|| a.trial_id.cmp(&b.trial_id))
}

/// Sorts by rank score descending, then trial id ascending. Failed pairs
/// come last, ordered by trial id.
pub fn rank_trials(patient_id: &str, results: &[PairResult]) -> Result<RankedList, MixedPatients> {
    let mut entries = Vec::with_capacity(results.len());
    for r in results {
        if r.patient_id() != patient_id {
            return Err(MixedPatients {
                expected: patient_id.into(),
                found: r.patient_id().into(),
                trial_id: r.trial_id().into(),
            });
        }
        entries.push(match r {
            PairResult::Assessed(a) => RankEntry {
                trial_id: a.trial_id().into(),
                rank_score: Some(a.rank_score()),
                exclusion_score: Some(a.exclusion_score()),
            },
            PairResult::Failed(f) => RankEntry {
                trial_id: f.trial_id.clone(),
                rank_score: None,
                exclusion_score: None,
            },
        });
    }
    entries.sort_by(entry_order);
    Ok(RankedList {
        patient_id: patient_id.into(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendError;
    use crate::model::EligibilityLabel;
    use crate::scoring::compute_scores;
    use alloc::vec;
    use core::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};

    struct PerKind {
        inclusion: &'static str,
        exclusion: &'static str,
        calls: AtomicU32,
    }

    impl ChatBackend for PerKind {
        fn name(&self) -> &str {
            "per-kind"
        }

        fn generate(
            &self,
            _: &[ChatMessage],
            _: &GenerationConfig,
            ctx: &RequestContext,
        ) -> Result<String, BackendError> {
            self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            Ok(match ctx.kind {
                CriterionKind::Inclusion => self.inclusion,
                CriterionKind::Exclusion => self.exclusion,
            }
            .into())
        }
    }

    fn note() -> PatientNote {
        PatientNote::new("p1", vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    fn trial(inclusion: &str, exclusion: &str) -> ClinicalTrial {
        ClinicalTrial {
            trial_id: "t1".into(),
            title: "T".into(),
            summary: "S".into(),
            target_diseases: vec![],
            interventions: vec![],
            inclusion_text: inclusion.into(),
            exclusion_text: exclusion.into(),
        }
    }

    #[test]
    fn inclusion_only_trial_all_met() {
        let backend = PerKind {
            inclusion: r#"```json {"a": ["x", [0], "included"], "b": ["y", [1], "included"]} ```"#,
            exclusion: "unused",
            calls: AtomicU32::new(0),
        };
        let report = assess_pair(
            &note(),
            &trial("crit", ""),
            &backend,
            &GenerationConfig::default(),
        );
        let a = report.result.assessment().unwrap();
        assert_eq!(a.inclusion().len(), 2);
        assert!(a.exclusion().is_empty());
        assert_eq!(a.rank_score(), 1.0);
        assert_eq!(backend.calls.load(AtomicOrdering::SeqCst), 1);
    }

    #[test]
    fn both_kinds_scores_match_compute_scores() {
        let backend = PerKind {
            inclusion: r#"```{"a": ["x", [0], "included"], "b": ["y", [], "not included"], "c": ["z", [2], "no relevant information"]}```"#,
            exclusion: r#"```{"d": ["x", [1], "excluded"], "e": ["y", [], "not excluded"]}```"#,
            calls: AtomicU32::new(0),
        };
        let report = assess_pair(
            &note(),
            &trial("i", "e"),
            &backend,
            &GenerationConfig::default(),
        );
        let a = report.result.assessment().unwrap();
        let expected = compute_scores(a.inclusion(), a.exclusion());
        assert_eq!(a.rank_score(), expected.rank_score);
        assert_eq!(a.exclusion_score(), expected.exclusion_score);
        assert_eq!(a.rank_score(), 1.0 / 3.0 - 0.5);
        assert_eq!(report.transcripts.len(), 2);
    }

    #[test]
    fn always_invalid_backend_fails_the_pair() {
        let backend = PerKind {
            inclusion: "nope",
            exclusion: "nope",
            calls: AtomicU32::new(0),
        };
        let report = assess_pair(
            &note(),
            &trial("i", "e"),
            &backend,
            &GenerationConfig::default(),
        );
        assert!(matches!(
            report.result,
            PairResult::Failed(PairFailure {
                kind: CriterionKind::Inclusion,
                ..
            })
        ));
        assert_eq!(backend.calls.load(AtomicOrdering::SeqCst), 5);
    }

    #[test]
    fn out_of_range_evidence_is_dropped_with_warning() {
        let backend = PerKind {
            inclusion: r#"```{"a": ["x", [0, 7, -1], "included"]}```"#,
            exclusion: "",
            calls: AtomicU32::new(0),
        };
        let report = assess_pair(
            &note(),
            &trial("i", ""),
            &backend,
            &GenerationConfig::default(),
        );
        let a = report.result.assessment().unwrap();
        assert_eq!(a.inclusion()[0].evidence_ids, vec![0]);
        assert_eq!(report.warnings.len(), 2);
        assert_eq!(report.warnings[0].evidence_id, 7);
    }

    fn scored(trial_id: &str, labels: &[EligibilityLabel]) -> PairResult {
        let inclusion = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| CriterionAssessment {
                criterion_text: alloc::format!("c{i}"),
                kind: CriterionKind::Inclusion,
                explanation: String::new(),
                evidence_ids: vec![],
                label,
            })
            .collect();
        PairResult::Assessed(TrialAssessment::new("p1", trial_id, inclusion, vec![]).unwrap())
    }

    #[test]
    fn rank_ties_break_on_trial_id() {
        use EligibilityLabel::*;
        let results = vec![
            scored("C", &[Included, NotIncluded]),
            scored(
                "B",
                &[
                    Included,
                    Included,
                    Included,
                    Included,
                    Included,
                    Included,
                    Included,
                    Included,
                    Included,
                    NotIncluded,
                ],
            ),
            scored("A", &[Included, NotIncluded]),
        ];
        let ranked = rank_trials("p1", &results).unwrap();
        let order: Vec<&str> = ranked.entries.iter().map(|e| e.trial_id.as_str()).collect();
        assert_eq!(order, vec!["B", "A", "C"]);
    }

    #[test]
    fn failed_pairs_rank_last() {
        let results = vec![
            PairResult::Failed(PairFailure {
                patient_id: "p1".into(),
                trial_id: "A".into(),
                kind: CriterionKind::Inclusion,
                reason: "x".into(),
            }),
            scored("Z", &[EligibilityLabel::NotIncluded]),
        ];
        let ranked = rank_trials("p1", &results).unwrap();
        assert_eq!(ranked.entries[0].trial_id, "Z");
        assert_eq!(ranked.entries[1].rank_score, None);
    }

    #[test]
    fn empty_and_mixed() {
        assert!(rank_trials("p1", &[]).unwrap().entries.is_empty());
        let other = PairResult::Assessed(TrialAssessment::new("p2", "t", vec![], vec![]).unwrap());
        assert!(rank_trials("p1", &[other]).is_err());
    }
}
