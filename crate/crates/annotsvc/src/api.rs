use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::events::EditEvent;
use crate::store::{Ack, SessionInfo, Store, StoreError, Submission, TaskView};

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (status, body) = match &self.0 {
            StoreError::UnknownSession(_) => (StatusCode::NOT_FOUND, json!({ "error": message })),
            StoreError::Done | StoreError::WrongTask { .. } => {
                (StatusCode::CONFLICT, json!({ "error": message }))
            }
            StoreError::EventRejected {
                first_bad_index, ..
            } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message, "first_bad_index": first_bad_index }),
            ),
            StoreError::ReplayMismatch { position } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message, "position": position }),
            ),
            StoreError::EmptyText => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message }),
            ),
            _ => {
                log::error!("{message}");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({ "error": message }),
                )
            }
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a store operation off the async executor; every write ends in an fsync.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| {
            ApiError(StoreError::Io {
                path: "<worker>".into(),
                source: std::io::Error::other(e),
            })
        })?
        .map_err(ApiError)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub annotator_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub annotator_id: String,
    pub seed: u64,
    pub task_order: Vec<String>,
    pub total: usize,
}

impl From<SessionInfo> for SessionCreated {
    fn from(info: SessionInfo) -> Self {
        SessionCreated {
            task_order: info.task_order(),
            total: info.tasks.len(),
            session_id: info.session_id,
            annotator_id: info.annotator_id,
            seed: info.seed,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct EventBatch {
    pub message_id: String,
    #[serde(default)]
    pub events: Vec<EditEvent>,
}

#[derive(Debug, Deserialize)]
pub struct SubmitRequest {
    pub message_id: String,
    pub final_text: String,
}

#[derive(Debug, Deserialize)]
pub struct SkipRequest {
    pub message_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Skipped {
    pub commit_id: String,
    pub message_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportBody {
    pub corpus_jsonl: String,
    pub events_jsonl: String,
    pub skipped: usize,
}

async fn create_session(
    State(store): State<Arc<Store>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let info = blocking(move || store.create_session(&req.annotator_id, req.seed)).await?;
    Ok((StatusCode::CREATED, Json(info.into())))
}

async fn next_task(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<TaskView> {
    Ok(Json(store.next_task(&id)?))
}

async fn record_events(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(batch): Json<EventBatch>,
) -> ApiResult<Ack> {
    let ack = blocking(move || store.record_events(&id, &batch.message_id, batch.events)).await?;
    Ok(Json(ack))
}

async fn submit(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<Submission> {
    let sub = blocking(move || store.submit(&id, &req.message_id, &req.final_text)).await?;
    Ok(Json(sub))
}

async fn skip(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(req): Json<SkipRequest>,
) -> ApiResult<Skipped> {
    let task = blocking(move || store.skip(&id, &req.message_id)).await?;
    Ok(Json(Skipped {
        commit_id: task.commit_id,
        message_id: task.message_id,
    }))
}

async fn export(State(store): State<Arc<Store>>) -> ApiResult<ExportBody> {
    let export = blocking(move || store.export()).await?;
    Ok(Json(ExportBody {
        corpus_jsonl: export.corpus_jsonl(),
        events_jsonl: export.events_jsonl(),
        skipped: export.skips.len(),
    }))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/task", get(next_task))
        .route("/sessions/{id}/events", post(record_events))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/skip", post(skip))
        .route("/export", get(export))
        .with_state(store)
}
