//! JSON API routes.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dlot_core::export::{self, Format};
use dlot_core::{Phase, PromptSpec, SessionConfig, SessionError, Timestamp, Violation};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::host::{HostError, SubmitError, SubmitRequest};
use crate::registry::{lock, FileHost, Registry, RegistryError};
use crate::stream;

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub heartbeat: Duration,
}

/// Error body: `{"error": code, "message": text, "violations": [...]}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub violations: Vec<Violation>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[Violation]>::is_empty")]
    violations: &'a [Violation],
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
            violations: &self.violations,
        };
        (self.status, Json(body)).into_response()
    }
}

fn phase_error(e: SessionError) -> ApiError {
    match e {
        SessionError::AlreadyRunning | SessionError::SessionEnded | SessionError::NotRunning => {
            ApiError::new(StatusCode::CONFLICT, "wrong_phase", e.to_string())
        }
        e => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.to_string()),
    }
}

impl From<HostError> for ApiError {
    fn from(e: HostError) -> Self {
        match e {
            HostError::Session(e) => phase_error(e),
            HostError::Storage(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "storage", e.to_string()),
            HostError::UnknownObserver(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_observer", e.to_string())
            }
            HostError::AlreadyJoined(_) => ApiError::new(StatusCode::CONFLICT, "already_joined", e.to_string()),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Exists(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            RegistryError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            RegistryError::Invalid(violations) => ApiError {
                status: StatusCode::BAD_REQUEST,
                code: "invalid_config",
                message: format!("{} problems in session config", violations.len()),
                violations,
            },
            RegistryError::Host(e) => e.into(),
            e => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "storage", e.to_string()),
        }
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let (status, code) = match &e {
            SubmitError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            SubmitError::NotRunning(_) => (StatusCode::CONFLICT, "not_running"),
            SubmitError::Late { .. } => (StatusCode::CONFLICT, "late"),
            SubmitError::KeyConflict(_) => (StatusCode::CONFLICT, "key_conflict"),
            SubmitError::UnknownPrompt(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_prompt"),
            SubmitError::WrongSubject { .. } | SubmitError::MissingSubject | SubmitError::Invalid(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_submission")
            }
            SubmitError::Storage(_) => (StatusCode::SERVICE_UNAVAILABLE, "storage"),
            SubmitError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn bad_request(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(bad_request)
}

pub(crate) fn bearer(headers: &HeaderMap) -> Option<String> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim().to_string())
}

/// Runs `f` on the session's host off the async threads; journal writes
/// block on fsync.
async fn with_host<T, F>(app: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut FileHost, Timestamp) -> T + Send + 'static,
{
    let slot = app.registry.get(id)?;
    let clock = app.registry.clock().clone();
    tokio::task::spawn_blocking(move || {
        let mut host = lock(&slot);
        f(&mut host, clock.now())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

pub fn router(app: AppState, ui_dir: Option<std::path::PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/observers", post(join))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/observations", post(submit))
        .route("/sessions/{id}/end", post(end))
        .route("/sessions/{id}/export", get(export_session))
        .route("/sessions/{id}/stream", get(stream::handler))
        .with_state(app);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

async fn placeholder() -> Html<&'static str> {
    Html(include_str!("placeholder.html"))
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub phase: Phase,
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(bad_request)?.to_string();
    let registry = app.registry.clone();
    let session_id = tokio::task::spawn_blocking(move || registry.create(&text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let location = HeaderValue::from_str(&format!("/sessions/{session_id}")).map_err(bad_request)?;
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, location)],
        Json(Created {
            session_id,
            phase: Phase::Created,
        }),
    )
        .into_response())
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.registry.ids())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObserverStatus {
    pub observer_id: String,
    pub joined: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub phase: Phase,
    pub started_at: Option<Timestamp>,
    pub ended_at: Option<Timestamp>,
    pub prompts_issued: u64,
    pub observation_count: usize,
    pub open_prompt: Option<PromptSpec>,
    pub observers: Vec<ObserverStatus>,
    pub server_time: Timestamp,
    pub config: SessionConfig,
}

async fn session_status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>, ApiError> {
    with_host(&app, &id, |host, now| {
        host.tick(now)?;
        let state = host.state();
        Ok(Json(SessionStatus {
            session_id: state.config().session_id.clone(),
            phase: state.phase(),
            started_at: state.started_at(),
            ended_at: state.ended_at(),
            prompts_issued: state.prompts_issued(),
            observation_count: state.observations().len(),
            open_prompt: host.current_prompt().cloned(),
            observers: state
                .config()
                .observer_ids
                .iter()
                .map(|o| ObserverStatus {
                    observer_id: o.clone(),
                    joined: host.has_joined(o),
                })
                .collect(),
            server_time: now,
            config: state.config().clone(),
        }))
    })
    .await?
    .map_err(|e: HostError| e.into())
}

#[derive(Deserialize)]
struct JoinRequest {
    observer_id: String,
}

async fn join(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: JoinRequest = parse_body(&body)?;
    let credential = with_host(&app, &id, move |host, _| host.join(&req.observer_id)).await??;
    Ok((StatusCode::CREATED, Json(credential)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PhaseChange {
    pub session_id: String,
    pub phase: Phase,
    pub at: Timestamp,
}

async fn start(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<PhaseChange>, ApiError> {
    let at = with_host(&app, &id, |host, now| host.start(now)).await??;
    Ok(Json(PhaseChange {
        session_id: id,
        phase: Phase::Running,
        at,
    }))
}

async fn end(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<PhaseChange>, ApiError> {
    let at = with_host(&app, &id, |host, now| host.end(now)).await??;
    Ok(Json(PhaseChange {
        session_id: id,
        phase: Phase::Ended,
        at,
    }))
}

async fn submit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    // unknown session first, then credentials, then the body
    app.registry.get(&id)?;
    let token = bearer(&headers).ok_or(SubmitError::Unauthorized)?;
    let req: SubmitRequest = parse_body(&body)?;
    let submitted = with_host(&app, &id, move |host, now| host.submit(now, &token, &req)).await??;
    let status = if submitted.duplicate {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    Ok((status, Json(submitted.ack)).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let name = q.format.as_deref().unwrap_or("csv");
    let format = Format::parse(name).ok_or_else(|| bad_request(format!("unknown export format {name:?}")))?;
    let bytes = with_host(&app, &id, move |host, now| {
        host.tick(now)?;
        Ok::<_, HostError>(format.render(&export::to_rows(host.state())))
    })
    .await??;
    let disposition = format!("attachment; filename=\"{id}.{}\"", format.extension());
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(format.content_type())),
            (
                header::CONTENT_DISPOSITION,
                HeaderValue::from_str(&disposition).map_err(bad_request)?,
            ),
        ],
        bytes,
    )
        .into_response())
}
