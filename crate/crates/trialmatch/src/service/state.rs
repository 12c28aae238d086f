//! Annotation-service state, the events that change it, and the checks
//! that decide whether a request becomes an event.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use trialmatch_core::corpus::Corpus;
use trialmatch_core::metrics::{HumanVerdict, PredictionIndex};
use trialmatch_core::selection::CriterionRow;
use trialmatch_core::{
    CriterionAssessment, CriterionKind, EligibilityLabel, ErrorType, GoldCriterionAnnotation,
    PatientNote, ReasoningMode,
};

use crate::io::sha256_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Done,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Annotation,
    Judgment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub patient_id: String,
    pub trial: TrialSummary,
    pub criterion_text: String,
    pub kind: CriterionKind,
    pub status: TaskStatus,
}

/// What one model said about a criterion, without saying which model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub explanation: String,
    pub evidence_ids: Vec<i64>,
    pub label: EligibilityLabel,
}

impl From<&CriterionAssessment> for ModelOutput {
    fn from(a: &CriterionAssessment) -> Self {
        ModelOutput {
            explanation: a.explanation.clone(),
            evidence_ids: a.evidence_ids.clone(),
            label: a.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenMapping {
    pub model_x: String,
    pub model_y: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindJudgmentTask {
    pub task_id: String,
    pub patient_id: String,
    pub trial: TrialSummary,
    pub criterion_text: String,
    pub kind: CriterionKind,
    pub output_x: ModelOutput,
    pub output_y: ModelOutput,
    /// Never part of an API response before the verdict is in.
    pub hidden_mapping: HiddenMapping,
    /// The pair of models in the order the head-to-head report uses.
    pub model_a: String,
    pub model_b: String,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    X,
    Y,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredVerdict {
    pub winner: Winner,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_id: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    PatientRegistered {
        patient: PatientNote,
    },
    AnnotationTaskCreated {
        task: AnnotationTask,
    },
    JudgmentTaskCreated {
        task: BlindJudgmentTask,
    },
    AnnotationSubmitted {
        task_id: String,
        annotation: GoldCriterionAnnotation,
    },
    JudgmentSubmitted {
        task_id: String,
        verdict: StoredVerdict,
    },
    TaskSkipped {
        task_id: String,
        timestamp: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{message}")]
    Invalid {
        message: String,
        violations: Vec<String>,
    },
    #[error("{0}")]
    Storage(String),
}

impl ServiceError {
    fn invalid(message: impl Into<String>) -> Self {
        ServiceError::Invalid {
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

/// Client body for `POST /tasks/{id}/annotation`. Pair, criterion and kind
/// come from the task; `annotation_id` defaults to the task id and
/// `timestamp` to the time of receipt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSubmission {
    #[serde(default)]
    pub annotation_id: Option<String>,
    pub gold_label: EligibilityLabel,
    #[serde(default)]
    pub gold_evidence_ids: Vec<usize>,
    pub reasoning_mode: ReasoningMode,
    #[serde(default)]
    pub error_type: Option<ErrorType>,
    pub annotator_id: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentSubmission {
    pub winner: Winner,
    #[serde(default)]
    pub judge_id: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub done: usize,
    pub skipped: usize,
    pub total: usize,
}

impl StatusCounts {
    fn tally(statuses: impl Iterator<Item = TaskStatus>) -> Self {
        let mut c = StatusCounts::default();
        for s in statuses {
            c.total += 1;
            match s {
                TaskStatus::Pending => c.pending += 1,
                TaskStatus::Done => c.done += 1,
                TaskStatus::Skipped => c.skipped += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub annotation: StatusCounts,
    pub judgment: StatusCounts,
}

type CriterionKey = (String, String, CriterionKind, String);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    patients: BTreeMap<String, PatientNote>,
    annotation_tasks: Vec<AnnotationTask>,
    judgment_tasks: Vec<BlindJudgmentTask>,
    task_index: BTreeMap<String, (TaskKind, usize)>,
    /// Last-write-wins store keyed by annotation id.
    annotations: BTreeMap<String, GoldCriterionAnnotation>,
    annotation_of_task: BTreeMap<String, String>,
    verdicts: BTreeMap<String, StoredVerdict>,
}

fn digest_id(prefix: &str, parts: &[&str]) -> String {
    let joined = parts.join("\u{1f}");
    format!("{prefix}-{}", &sha256_bytes(joined.as_bytes())[..16])
}

pub fn annotation_task_id(
    patient_id: &str,
    trial_id: &str,
    kind: CriterionKind,
    text: &str,
) -> String {
    digest_id("a", &[patient_id, trial_id, kind.as_str(), text])
}

pub fn judgment_task_id(key: &CriterionKey, model_a: &str, model_b: &str) -> String {
    digest_id(
        "j",
        &[&key.0, &key.1, key.2.as_str(), &key.3, model_a, model_b],
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("pool rows reference ids missing from the corpus: {}", offenders.join(", "))]
pub struct ImportError {
    pub offenders: Vec<String>,
}

impl State {
    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::PatientRegistered { patient } => {
                self.patients
                    .entry(patient.patient_id().to_string())
                    .or_insert_with(|| patient.clone());
            }
            Event::AnnotationTaskCreated { task } => {
                if !self.task_index.contains_key(&task.task_id) {
                    self.task_index.insert(
                        task.task_id.clone(),
                        (TaskKind::Annotation, self.annotation_tasks.len()),
                    );
                    self.annotation_tasks.push(task.clone());
                }
            }
            Event::JudgmentTaskCreated { task } => {
                if !self.task_index.contains_key(&task.task_id) {
                    self.task_index.insert(
                        task.task_id.clone(),
                        (TaskKind::Judgment, self.judgment_tasks.len()),
                    );
                    self.judgment_tasks.push(task.clone());
                }
            }
            Event::AnnotationSubmitted {
                task_id,
                annotation,
            } => {
                if let Some(t) = self.annotation_task_mut(task_id) {
                    t.status = TaskStatus::Done;
                }
                self.annotation_of_task
                    .insert(task_id.clone(), annotation.annotation_id.clone());
                self.annotations
                    .insert(annotation.annotation_id.clone(), annotation.clone());
            }
            Event::JudgmentSubmitted { task_id, verdict } => {
                if let Some(&(TaskKind::Judgment, i)) = self.task_index.get(task_id) {
                    self.judgment_tasks[i].status = TaskStatus::Done;
                }
                self.verdicts.insert(task_id.clone(), verdict.clone());
            }
            Event::TaskSkipped { task_id, .. } => match self.task_index.get(task_id) {
                Some(&(TaskKind::Annotation, i)) => {
                    self.annotation_tasks[i].status = TaskStatus::Skipped
                }
                Some(&(TaskKind::Judgment, i)) => {
                    self.judgment_tasks[i].status = TaskStatus::Skipped
                }
                None => {}
            },
        }
    }

    fn annotation_task_mut(&mut self, task_id: &str) -> Option<&mut AnnotationTask> {
        match self.task_index.get(task_id) {
            Some(&(TaskKind::Annotation, i)) => Some(&mut self.annotation_tasks[i]),
            _ => None,
        }
    }

    pub fn patient(&self, id: &str) -> Option<&PatientNote> {
        self.patients.get(id)
    }

    pub fn annotation_task(&self, id: &str) -> Option<&AnnotationTask> {
        match self.task_index.get(id) {
            Some(&(TaskKind::Annotation, i)) => Some(&self.annotation_tasks[i]),
            _ => None,
        }
    }

    pub fn judgment_task(&self, id: &str) -> Option<&BlindJudgmentTask> {
        match self.task_index.get(id) {
            Some(&(TaskKind::Judgment, i)) => Some(&self.judgment_tasks[i]),
            _ => None,
        }
    }

    pub fn task_kind(&self, id: &str) -> Option<TaskKind> {
        self.task_index.get(id).map(|&(k, _)| k)
    }

    pub fn annotation_tasks(&self) -> &[AnnotationTask] {
        &self.annotation_tasks
    }

    pub fn judgment_tasks(&self) -> &[BlindJudgmentTask] {
        &self.judgment_tasks
    }

    /// First pending task of `kind` in import order.
    pub fn next_pending(&self, kind: TaskKind) -> Option<&str> {
        match kind {
            TaskKind::Annotation => self
                .annotation_tasks
                .iter()
                .find(|t| t.status == TaskStatus::Pending)
                .map(|t| t.task_id.as_str()),
            TaskKind::Judgment => self
                .judgment_tasks
                .iter()
                .find(|t| t.status == TaskStatus::Pending)
                .map(|t| t.task_id.as_str()),
        }
    }

    pub fn annotation_for_task(&self, task_id: &str) -> Option<&GoldCriterionAnnotation> {
        self.annotation_of_task
            .get(task_id)
            .and_then(|id| self.annotations.get(id))
    }

    pub fn verdict_for_task(&self, task_id: &str) -> Option<&StoredVerdict> {
        self.verdicts.get(task_id)
    }

    pub fn progress(&self) -> Progress {
        Progress {
            annotation: StatusCounts::tally(self.annotation_tasks.iter().map(|t| t.status)),
            judgment: StatusCounts::tally(self.judgment_tasks.iter().map(|t| t.status)),
        }
    }

    /// Current annotations of done tasks, in task import order.
    pub fn export_annotations(&self) -> Vec<GoldCriterionAnnotation> {
        self.annotation_tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Done)
            .filter_map(|t| self.annotation_for_task(&t.task_id).cloned())
            .collect()
    }

    /// Unblinded verdicts of done judgment tasks, in import order.
    pub fn export_verdicts(&self) -> Vec<HumanVerdict> {
        self.judgment_tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Done)
            .filter_map(|t| {
                let v = self.verdicts.get(&t.task_id)?;
                Some(HumanVerdict {
                    patient_id: t.patient_id.clone(),
                    trial_id: t.trial.trial_id.clone(),
                    kind: t.kind,
                    criterion_text: t.criterion_text.clone(),
                    model_a: t.model_a.clone(),
                    model_b: t.model_b.clone(),
                    winner: unblind(t, v.winner).map(str::to_owned),
                })
            })
            .collect()
    }

    /// Events creating one annotation task per new pool row. Rows already
    /// imported (same patient, trial, kind and criterion text) are skipped.
    pub fn plan_task_import(
        &self,
        rows: &[CriterionRow],
        corpus: &Corpus,
    ) -> Result<Vec<Event>, ImportError> {
        check_references(rows, corpus)?;
        let mut events = Vec::new();
        let mut registered: BTreeSet<&str> = self.patients.keys().map(String::as_str).collect();
        let mut seen = BTreeSet::new();
        for row in rows {
            let task_id = annotation_task_id(
                &row.patient_id,
                &row.trial_id,
                row.kind,
                &row.criterion_text,
            );
            if self.task_index.contains_key(&task_id) || !seen.insert(task_id.clone()) {
                continue;
            }
            let note = corpus.patient(&row.patient_id).expect("checked");
            let trial = corpus.trial(&row.trial_id).expect("checked");
            if registered.insert(note.patient_id()) {
                events.push(Event::PatientRegistered {
                    patient: note.clone(),
                });
            }
            events.push(Event::AnnotationTaskCreated {
                task: AnnotationTask {
                    task_id,
                    patient_id: row.patient_id.clone(),
                    trial: TrialSummary {
                        trial_id: trial.trial_id.clone(),
                        title: trial.title.clone(),
                    },
                    criterion_text: row.criterion_text.clone(),
                    kind: row.kind,
                    status: TaskStatus::Pending,
                },
            });
        }
        Ok(events)
    }

    /// Events creating a blind judgment task for every pool row on which
    /// the two models both produced a label and the labels differ. Which
    /// model shows up as `x` is a seeded coin flip per task.
    pub fn plan_judgment_import(
        &self,
        rows: &[CriterionRow],
        corpus: &Corpus,
        (model_a, preds_a): (&str, &PredictionIndex<'_>),
        (model_b, preds_b): (&str, &PredictionIndex<'_>),
        threshold: f64,
        seed: u64,
    ) -> Result<Vec<Event>, ImportError> {
        check_references(rows, corpus)?;
        let mut events = Vec::new();
        let mut registered: BTreeSet<&str> = self.patients.keys().map(String::as_str).collect();
        let mut seen = BTreeSet::new();
        for row in rows {
            let key: CriterionKey = (
                row.patient_id.clone(),
                row.trial_id.clone(),
                row.kind,
                row.criterion_text.clone(),
            );
            let task_id = judgment_task_id(&key, model_a, model_b);
            if self.task_index.contains_key(&task_id) || !seen.insert(task_id.clone()) {
                continue;
            }
            let probe = probe_annotation(row);
            let (Some(a), Some(b)) = (
                preds_a.align(&probe, threshold),
                preds_b.align(&probe, threshold),
            ) else {
                continue;
            };
            if a.label == b.label {
                continue;
            }
            let note = corpus.patient(&row.patient_id).expect("checked");
            let trial = corpus.trial(&row.trial_id).expect("checked");
            if registered.insert(note.patient_id()) {
                events.push(Event::PatientRegistered {
                    patient: note.clone(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id_bits(&task_id));
            let a_is_x: bool = rng.random();
            let (x, y, model_x, model_y) = if a_is_x {
                (a, b, model_a, model_b)
            } else {
                (b, a, model_b, model_a)
            };
            events.push(Event::JudgmentTaskCreated {
                task: BlindJudgmentTask {
                    task_id,
                    patient_id: row.patient_id.clone(),
                    trial: TrialSummary {
                        trial_id: trial.trial_id.clone(),
                        title: trial.title.clone(),
                    },
                    criterion_text: row.criterion_text.clone(),
                    kind: row.kind,
                    output_x: x.into(),
                    output_y: y.into(),
                    hidden_mapping: HiddenMapping {
                        model_x: model_x.into(),
                        model_y: model_y.into(),
                    },
                    model_a: model_a.into(),
                    model_b: model_b.into(),
                    status: TaskStatus::Pending,
                },
            });
        }
        Ok(events)
    }

    pub fn plan_annotation(
        &self,
        task_id: &str,
        submission: AnnotationSubmission,
        now: DateTime<Utc>,
    ) -> Result<Event, ServiceError> {
        let task = match self.task_kind(task_id) {
            None => return Err(ServiceError::NotFound(format!("no task {task_id}"))),
            Some(TaskKind::Judgment) => {
                return Err(ServiceError::invalid(format!(
                    "task {task_id} is a judgment task"
                )))
            }
            Some(TaskKind::Annotation) => self.annotation_task(task_id).expect("indexed"),
        };
        let annotation_id = submission
            .annotation_id
            .unwrap_or_else(|| task_id.to_string());
        if annotation_id.is_empty() {
            return Err(ServiceError::invalid("annotation_id must not be empty"));
        }
        if submission.annotator_id.trim().is_empty() {
            return Err(ServiceError::invalid("annotator_id must not be empty"));
        }
        match task.status {
            TaskStatus::Pending => {}
            TaskStatus::Skipped => {
                return Err(ServiceError::Conflict(format!(
                    "task {task_id} was skipped"
                )))
            }
            // A done task accepts a correction under its own annotation id.
            TaskStatus::Done => {
                if self.annotation_of_task.get(task_id) != Some(&annotation_id) {
                    return Err(ServiceError::Conflict(format!(
                        "task {task_id} is already annotated"
                    )));
                }
            }
        }
        if let Some(owner) = self.annotations.get(&annotation_id) {
            let owner_task = annotation_task_id(
                &owner.patient_id,
                &owner.trial_id,
                owner.kind,
                &owner.criterion_text,
            );
            if owner_task != task_id {
                return Err(ServiceError::Conflict(format!(
                    "annotation id {annotation_id} belongs to another task"
                )));
            }
        }
        let annotation = GoldCriterionAnnotation {
            annotation_id,
            patient_id: task.patient_id.clone(),
            trial_id: task.trial.trial_id.clone(),
            criterion_text: task.criterion_text.clone(),
            kind: task.kind,
            gold_label: submission.gold_label,
            gold_evidence_ids: submission.gold_evidence_ids,
            reasoning_mode: submission.reasoning_mode,
            error_type: submission.error_type,
            annotator_id: submission.annotator_id,
            timestamp: submission.timestamp.unwrap_or(now),
        };
        let note = self.patients.get(&task.patient_id).ok_or_else(|| {
            ServiceError::Storage(format!("patient {} missing from journal", task.patient_id))
        })?;
        let violations = annotation.validate(note);
        if !violations.is_empty() {
            return Err(ServiceError::Invalid {
                message: "annotation violates the task's constraints".into(),
                violations: violations.iter().map(ToString::to_string).collect(),
            });
        }
        Ok(Event::AnnotationSubmitted {
            task_id: task_id.into(),
            annotation,
        })
    }

    pub fn plan_judgment(
        &self,
        task_id: &str,
        submission: JudgmentSubmission,
        now: DateTime<Utc>,
    ) -> Result<Event, ServiceError> {
        let task = match self.task_kind(task_id) {
            None => return Err(ServiceError::NotFound(format!("no task {task_id}"))),
            Some(TaskKind::Annotation) => {
                return Err(ServiceError::invalid(format!(
                    "task {task_id} is an annotation task"
                )))
            }
            Some(TaskKind::Judgment) => self.judgment_task(task_id).expect("indexed"),
        };
        if task.status != TaskStatus::Pending {
            return Err(ServiceError::Conflict(format!(
                "task {task_id} is already closed"
            )));
        }
        Ok(Event::JudgmentSubmitted {
            task_id: task_id.into(),
            verdict: StoredVerdict {
                winner: submission.winner,
                judge_id: submission.judge_id,
                timestamp: now,
            },
        })
    }

    pub fn plan_skip(&self, task_id: &str, now: DateTime<Utc>) -> Result<Event, ServiceError> {
        let status = match self.task_kind(task_id) {
            None => return Err(ServiceError::NotFound(format!("no task {task_id}"))),
            Some(TaskKind::Annotation) => self.annotation_task(task_id).expect("indexed").status,
            Some(TaskKind::Judgment) => self.judgment_task(task_id).expect("indexed").status,
        };
        if status != TaskStatus::Pending {
            return Err(ServiceError::Conflict(format!(
                "task {task_id} is already closed"
            )));
        }
        Ok(Event::TaskSkipped {
            task_id: task_id.into(),
            timestamp: now,
        })
    }
}

/// Name of the model the judge picked, or `None` for a tie.
pub fn unblind(task: &BlindJudgmentTask, winner: Winner) -> Option<&str> {
    match winner {
        Winner::X => Some(&task.hidden_mapping.model_x),
        Winner::Y => Some(&task.hidden_mapping.model_y),
        Winner::Tie => None,
    }
}

fn id_bits(task_id: &str) -> u64 {
    let digest = sha256_bytes(task_id.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// A gold-shaped record used only to look up predictions for a pool row.
fn probe_annotation(row: &CriterionRow) -> GoldCriterionAnnotation {
    GoldCriterionAnnotation {
        annotation_id: String::new(),
        patient_id: row.patient_id.clone(),
        trial_id: row.trial_id.clone(),
        criterion_text: row.criterion_text.clone(),
        kind: row.kind,
        gold_label: row.predicted_label,
        gold_evidence_ids: Vec::new(),
        reasoning_mode: ReasoningMode::Explicit,
        error_type: None,
        annotator_id: String::new(),
        timestamp: DateTime::<Utc>::UNIX_EPOCH,
    }
}

fn check_references(rows: &[CriterionRow], corpus: &Corpus) -> Result<(), ImportError> {
    let patients = corpus.patient_index();
    let trials = corpus.trial_index();
    let mut offenders = BTreeSet::new();
    for row in rows {
        if !patients.contains_key(row.patient_id.as_str()) {
            offenders.insert(format!("patient {}", row.patient_id));
        }
        if !trials.contains_key(row.trial_id.as_str()) {
            offenders.insert(format!("trial {}", row.trial_id));
        }
    }
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(ImportError {
            offenders: offenders.into_iter().collect(),
        })
    }
}
