//! HTTP routes. Bodies are JSON; exports are JSON lines.
//!
//! | route | response |
//! |---|---|
//! | `GET /tasks/next?kind=annotation\|judgment` | next pending task, or 204 |
//! | `GET /tasks/{id}` | task view |
//! | `POST /tasks/{id}/annotation` | stored annotation |
//! | `POST /tasks/{id}/judgment` | unblinded verdict |
//! | `POST /tasks/{id}/skip` | task view |
//! | `GET /patients/{id}` | patient note |
//! | `GET /progress` | status counts per task kind |
//! | `GET /export/annotations` | gold annotations |
//! | `GET /export/judgments` | human verdicts |
//!
//! Errors are `{"error": ..., "violations": [...]}` with 404 for unknown
//! ids, 409 for tasks that are no longer pending and 422 for bodies that do
//! not validate.

use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State as AxState};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use trialmatch_core::{CriterionKind, EligibilityLabel, GoldCriterionAnnotation, PatientNote};

use super::state::{
    unblind, AnnotationSubmission, Event, JudgmentSubmission, ModelOutput, ServiceError, State,
    TaskKind, TaskStatus, TrialSummary, Winner,
};
use super::Service;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, violations) = match &self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, vec![]),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, vec![]),
            ServiceError::Invalid { violations, .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, violations.clone())
            }
            ServiceError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, vec![]),
        };
        (
            status,
            Json(json!({"error": self.to_string(), "violations": violations})),
        )
            .into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealedVerdict {
    pub winner: Winner,
    pub winner_model: Option<String>,
    pub model_x: String,
    pub model_y: String,
}

/// What clients see of a task. Judgment views carry no model names until
/// the verdict is in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TaskView {
    Annotation {
        task_id: String,
        status: TaskStatus,
        patient: PatientNote,
        trial: TrialSummary,
        criterion_text: String,
        kind: CriterionKind,
        legal_labels: Vec<EligibilityLabel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotation: Option<GoldCriterionAnnotation>,
    },
    Judgment {
        task_id: String,
        status: TaskStatus,
        patient: PatientNote,
        trial: TrialSummary,
        criterion_text: String,
        kind: CriterionKind,
        output_x: ModelOutput,
        output_y: ModelOutput,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verdict: Option<RevealedVerdict>,
    },
}

fn missing_patient(id: &str) -> ServiceError {
    ServiceError::Storage(format!("patient {id} missing from journal"))
}

pub fn task_view(state: &State, task_id: &str) -> Result<TaskView, ServiceError> {
    match state.task_kind(task_id) {
        None => Err(ServiceError::NotFound(format!("no task {task_id}"))),
        Some(TaskKind::Annotation) => {
            let t = state.annotation_task(task_id).expect("indexed");
            let patient = state
                .patient(&t.patient_id)
                .ok_or_else(|| missing_patient(&t.patient_id))?;
            Ok(TaskView::Annotation {
                task_id: t.task_id.clone(),
                status: t.status,
                patient: patient.clone(),
                trial: t.trial.clone(),
                criterion_text: t.criterion_text.clone(),
                kind: t.kind,
                legal_labels: t.kind.legal_labels().to_vec(),
                annotation: state.annotation_for_task(task_id).cloned(),
            })
        }
        Some(TaskKind::Judgment) => {
            let t = state.judgment_task(task_id).expect("indexed");
            let patient = state
                .patient(&t.patient_id)
                .ok_or_else(|| missing_patient(&t.patient_id))?;
            let verdict = match (t.status, state.verdict_for_task(task_id)) {
                (TaskStatus::Done, Some(v)) => Some(RevealedVerdict {
                    winner: v.winner,
                    winner_model: unblind(t, v.winner).map(str::to_owned),
                    model_x: t.hidden_mapping.model_x.clone(),
                    model_y: t.hidden_mapping.model_y.clone(),
                }),
                _ => None,
            };
            Ok(TaskView::Judgment {
                task_id: t.task_id.clone(),
                status: t.status,
                patient: patient.clone(),
                trial: t.trial.clone(),
                criterion_text: t.criterion_text.clone(),
                kind: t.kind,
                output_x: t.output_x.clone(),
                output_y: t.output_y.clone(),
                verdict,
            })
        }
    }
}

type Shared = Arc<Service>;

#[derive(Deserialize)]
struct NextQuery {
    kind: Option<String>,
}

async fn next_task(
    AxState(svc): AxState<Shared>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ServiceError> {
    let kind = match q.kind.as_deref() {
        None | Some("annotation") => TaskKind::Annotation,
        Some("judgment") => TaskKind::Judgment,
        Some(other) => {
            return Err(ServiceError::Invalid {
                message: format!("kind must be annotation or judgment, got {other:?}"),
                violations: vec![],
            })
        }
    };
    let state = svc.state();
    match state.next_pending(kind) {
        Some(id) => Ok(Json(task_view(&state, id)?).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn get_task(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<TaskView>, ServiceError> {
    Ok(Json(task_view(&svc.state(), &id)?))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid {
        message: format!("invalid body: {e}"),
        violations: vec![],
    })
}

async fn post_annotation(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<GoldCriterionAnnotation>, ServiceError> {
    let submission: AnnotationSubmission = parse_body(&body)?;
    let events = svc.execute(|s, now| s.plan_annotation(&id, submission, now).map(|e| vec![e]))?;
    match events.into_iter().next() {
        Some(Event::AnnotationSubmitted { annotation, .. }) => Ok(Json(annotation)),
        _ => Err(ServiceError::Storage("annotation was not recorded".into())),
    }
}

async fn post_judgment(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<TaskView>, ServiceError> {
    let submission: JudgmentSubmission = parse_body(&body)?;
    svc.execute(|s, now| s.plan_judgment(&id, submission, now).map(|e| vec![e]))?;
    Ok(Json(task_view(&svc.state(), &id)?))
}

async fn post_skip(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<TaskView>, ServiceError> {
    svc.execute(|s, now| s.plan_skip(&id, now).map(|e| vec![e]))?;
    Ok(Json(task_view(&svc.state(), &id)?))
}

async fn get_patient(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PatientNote>, ServiceError> {
    svc.state()
        .patient(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ServiceError::NotFound(format!("no patient {id}")))
}

async fn progress(AxState(svc): AxState<Shared>) -> Json<Value> {
    Json(json!(svc.state().progress()))
}

fn jsonl<T: Serialize>(items: &[T]) -> Response {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item).expect("serializable"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn export_annotations(AxState(svc): AxState<Shared>) -> Response {
    jsonl(&svc.state().export_annotations())
}

async fn export_judgments(AxState(svc): AxState<Shared>) -> Response {
    jsonl(&svc.state().export_verdicts())
}

/// The API routes, plus a static bundle under `/` when `ui_dir` is given.
pub fn router(service: Shared, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/annotation", post(post_annotation))
        .route("/tasks/{id}/judgment", post(post_judgment))
        .route("/tasks/{id}/skip", post(post_skip))
        .route("/patients/{id}", get(get_patient))
        .route("/progress", get(progress))
        .route("/export/annotations", get(export_annotations))
        .route("/export/judgments", get(export_judgments))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(service: Shared, listen: &str, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!(
        "annotation service listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, router(service, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
