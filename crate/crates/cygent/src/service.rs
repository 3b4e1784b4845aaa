//! HTTP API: sessions, chat, uploads, summaries, history and feedback.
//!
//! | method | path                          | body / query          |
//! |--------|-------------------------------|-----------------------|
//! | POST   | `/sessions`                   | `{system_prompt?}`    |
//! | GET    | `/sessions/{id}`              |                       |
//! | POST   | `/sessions/{id}/messages`     | `{content}`           |
//! | POST   | `/sessions/{id}/files`        | `{name, content}`     |
//! | GET    | `/sessions/{id}/history`      |                       |
//! | POST   | `/files/{id}/summarize`       | `?mode=rules\|model\|both` |
//! | GET    | `/summaries/{id}`             |                       |
//! | PUT    | `/summaries/{id}`             | `{edited_text}`       |
//!
//! Every error body is `{code, message}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cygent_core::{count_tokens, ChatMessage, FileId, SessionId, SummaryId, WindowError, DEFAULT_MAX_BYTES};
use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::documents::{StoredFile, SummaryDocument, SummaryMode};
use crate::store::StoreError;
use crate::summarize::{SummarizeError, Summarizer};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Request bodies above this are rejected before parsing. It exceeds the
/// upload limit so oversize uploads get a precise error.
const BODY_LIMIT: usize = 2 * DEFAULT_MAX_BYTES + 1024 * 1024;

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a cybersecurity assistant. Answer questions about data protection, \
security threats and the log files the user uploads. Be concise and factual.";

/// Reads `CYGENT_BIND`, falling back to [`DEFAULT_BIND`].
pub fn bind_addr() -> Result<SocketAddr, std::net::AddrParseError> {
    std::env::var("CYGENT_BIND")
        .ok()
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
        .parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    PayloadTooLarge,
    BackendUnavailable,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::BackendUnavailable => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::NotFound { .. } => ApiError::new(ErrorCode::NotFound, err.to_string()),
            StoreError::Window(_) => ApiError::new(ErrorCode::BadRequest, err.to_string()),
            other => {
                tracing::error!(error = %other, "store failure");
                ApiError::new(ErrorCode::Internal, "internal storage failure")
            }
        }
    }
}

impl From<SummarizeError> for ApiError {
    fn from(err: SummarizeError) -> Self {
        match err {
            SummarizeError::Store(e) => e.into(),
            SummarizeError::Parse(e) => ApiError::new(ErrorCode::PayloadTooLarge, e.to_string()),
        }
    }
}

impl From<BackendError> for ApiError {
    fn from(err: BackendError) -> Self {
        tracing::warn!(error = %err, "backend call failed");
        ApiError::new(ErrorCode::BackendUnavailable, err.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let code = if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ErrorCode::PayloadTooLarge
        } else {
            ErrorCode::BadRequest
        };
        ApiError::new(code, rejection.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        ApiError::new(ErrorCode::BadRequest, rejection.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    summarizer: Summarizer,
    session_locks: Mutex<HashMap<SessionId, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(summarizer: Summarizer) -> Self {
        Self {
            inner: Arc::new(Inner {
                summarizer,
                session_locks: Mutex::new(HashMap::new()),
            }),
        }
    }

    fn session_lock(&self, id: &SessionId) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.inner.session_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.clone()).or_default().clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/files", post(upload_file))
        .route("/sessions/{id}/history", get(history))
        .route("/files/{id}/summarize", post(summarize))
        .route("/summaries/{id}", get(get_summary).put(save_feedback))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until the listener fails or the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    system_prompt: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: SessionId,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let system_prompt = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice::<CreateSession>(&body)
            .map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid session body: {e}")))?
            .system_prompt
    };
    let prompt = system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT);
    let session = state.inner.summarizer.store().create_session(Some(prompt))?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.session_id,
        }),
    ))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<Json<crate::documents::ChatSession>> {
    Ok(Json(state.inner.summarizer.store().get_session(&id)?))
}

#[derive(Deserialize)]
struct MessageBody {
    content: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: String,
    pub evicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_id: Option<SummaryId>,
}

/// The file a chat message asks to summarize: the message must say
/// "summarize" (or "summarise") and name a file of the session. The longest
/// matching name wins, then the most recent upload.
pub fn summarize_target<'a>(content: &str, files: &'a [StoredFile]) -> Option<&'a StoredFile> {
    let lower = content.to_lowercase();
    if !(lower.contains("summarize") || lower.contains("summarise")) {
        return None;
    }
    files
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.name.is_empty() && lower.contains(&f.name.to_lowercase()))
        .max_by_key(|(i, f)| (f.name.len(), *i))
        .map(|(_, f)| f)
}

fn summary_reply(name: &str, doc: &SummaryDocument) -> String {
    let mut reply = format!("Rule-based summary of {name}:\n{}", doc.rule_summary.rendered);
    match (&doc.model_summary, &doc.degraded_reason) {
        (Some(text), _) => reply.push_str(&format!("\nModel summary ({}):\n{text}", doc.backend_name)),
        (None, Some(reason)) => reply.push_str(&format!("\nModel summary unavailable: {reason}")),
        (None, None) => {}
    }
    reply
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<Json<MessageReply>> {
    let Json(body) = body?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;

    let store = state.inner.summarizer.store();
    let session = store.get_session(&id)?;
    let files = session
        .file_ids
        .iter()
        .map(|f| store.get_file(f))
        .collect::<Result<Vec<_>, _>>()?;
    let target = summarize_target(&body.content, &files).cloned();

    let mut evicted = store.append_message(&id, ChatMessage::user(body.content))?;
    let (reply, summary_id) = match target {
        Some(file) => {
            let doc = state.inner.summarizer.summarize(&file.file_id, SummaryMode::Both).await?;
            (summary_reply(&file.name, &doc), Some(doc.summary_id))
        }
        None => {
            let messages = store.get_session(&id)?.messages;
            (state.inner.summarizer.backend().chat(&messages).await?.content, None)
        }
    };
    evicted += append_reply(&state, &id, &reply, summary_id.as_ref())?;
    Ok(Json(MessageReply {
        reply,
        evicted,
        summary_id,
    }))
}

/// Appends the assistant reply to the history, substituting a short marker
/// when the reply alone cannot fit in the conversation window.
fn append_reply(state: &AppState, id: &SessionId, reply: &str, summary_id: Option<&SummaryId>) -> ApiResult<usize> {
    let store = state.inner.summarizer.store();
    match store.append_message(id, ChatMessage::assistant(reply)) {
        Err(StoreError::Window(WindowError::OversizeMessage { .. })) => {
            let marker = match summary_id {
                Some(sid) => format!("[reply of {} tokens omitted; stored as summary {sid}]", count_tokens(reply)),
                None => format!("[reply of {} tokens omitted]", count_tokens(reply)),
            };
            Ok(store.append_message(id, ChatMessage::assistant(marker))?)
        }
        other => Ok(other?),
    }
}

#[derive(Deserialize)]
struct UploadBody {
    name: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
pub struct Uploaded {
    pub file_id: FileId,
}

async fn upload_file(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    body: Result<Json<UploadBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Uploaded>)> {
    let Json(body) = body?;
    if body.content.len() > DEFAULT_MAX_BYTES {
        return Err(ApiError::new(
            ErrorCode::PayloadTooLarge,
            format!("file of {} bytes exceeds the {DEFAULT_MAX_BYTES}-byte limit", body.content.len()),
        ));
    }
    let summarizer = &state.inner.summarizer;
    let file = summarizer.store().put_file(&id, &body.name, body.content)?;
    summarizer
        .analyze(&file)
        .map_err(|e| ApiError::new(ErrorCode::PayloadTooLarge, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(Uploaded { file_id: file.file_id })))
}

async fn history(State(state): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<Response> {
    Ok(Json(state.inner.summarizer.store().list_history(&id)?).into_response())
}

#[derive(Deserialize)]
struct ModeQuery {
    mode: Option<String>,
}

async fn summarize(
    State(state): State<AppState>,
    Path(id): Path<FileId>,
    query: Result<Query<ModeQuery>, QueryRejection>,
) -> ApiResult<Json<SummaryDocument>> {
    let Query(query) = query?;
    let mode = match query.mode.as_deref() {
        None => SummaryMode::Both,
        Some(m) => m.parse().map_err(|e: String| ApiError::new(ErrorCode::BadRequest, e))?,
    };
    Ok(Json(state.inner.summarizer.summarize(&id, mode).await?))
}

async fn get_summary(State(state): State<AppState>, Path(id): Path<SummaryId>) -> ApiResult<Json<SummaryDocument>> {
    Ok(Json(state.inner.summarizer.store().get_summary(&id)?))
}

#[derive(Deserialize)]
struct FeedbackBody {
    edited_text: String,
}

async fn save_feedback(
    State(state): State<AppState>,
    Path(id): Path<SummaryId>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> ApiResult<Json<crate::documents::Acknowledgement>> {
    let Json(body) = body?;
    Ok(Json(state.inner.summarizer.store().save_feedback(&id, &body.edited_text)?))
}
