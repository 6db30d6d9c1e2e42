//! HTTP session service: creates timed sessions, routes each message to the
//! persona the participant picked, and records the questionnaire.

pub mod config;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use coachlab_core::gateway::{EmbeddingCache, GatewaySettings, LlmGateway, OpenAiProvider};
use coachlab_core::persona::PersonaId;
use coachlab_core::session::jsonl::SessionFilter;
use coachlab_core::session::store::SessionStore;
use coachlab_core::session::{
    create_session, ButtonOrder, Clock, EngineSettings, Message, Session, SessionEngine, SessionError, SessionSettings,
    SessionStatus, TimestampMs,
};
use coachlab_core::survey::{SurveyDraft, SurveyError};

pub use config::{ConfigError, ServerConfig};

pub struct AppState {
    pub store: Arc<SessionStore>,
    pub engine: SessionEngine,
    pub clock: Arc<dyn Clock>,
    pub settings: SessionSettings,
    pub treatment_probability: f64,
}

impl AppState {
    pub fn from_config(cfg: &ServerConfig, offline_stub: bool, clock: Arc<dyn Clock>) -> Result<Self, ConfigError> {
        cfg.validate(offline_stub)?;
        let gateway = if offline_stub {
            LlmGateway::offline()
        } else {
            let provider = Arc::new(OpenAiProvider::new(
                cfg.provider.base_url.clone(),
                cfg.provider.api_key.clone().unwrap_or_default(),
            ));
            let settings = GatewaySettings { max_in_flight: cfg.provider.max_in_flight, ..GatewaySettings::default() };
            LlmGateway::new(provider.clone(), provider, EmbeddingCache::in_memory(), settings)
        };
        let store = match &cfg.data_dir {
            Some(dir) => SessionStore::open(dir).map_err(|e| ConfigError::Storage(e.to_string()))?,
            None => SessionStore::in_memory(),
        };
        let engine = SessionEngine::new(
            cfg.persona_set()?,
            Arc::new(gateway),
            clock.clone(),
            EngineSettings {
                chat_model: cfg.provider.chat_model.clone(),
                chat_timeout: Duration::from_secs(cfg.provider.chat_timeout_secs),
                chat_retries: cfg.provider.chat_retries,
                grace_ms: cfg.grace_ms,
            },
        );
        Ok(Self {
            store: Arc::new(store),
            engine,
            clock,
            settings: SessionSettings { session_limit_ms: cfg.session_limit_ms, task_statement: cfg.task_statement.clone() },
            treatment_probability: cfg.treatment_probability,
        })
    }
}

/// What a participant's client sees. The condition is withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub task: String,
    pub started_at: TimestampMs,
    pub deadline_at: TimestampMs,
    pub remaining_ms: i64,
    pub button_order_seed: u64,
    pub button_order: ButtonOrder,
    pub status: SessionStatus,
    pub messages: Vec<Message>,
    pub survey_submitted: bool,
}

impl SessionView {
    pub fn of(s: &Session, now: TimestampMs) -> Self {
        Self {
            session_id: s.session_id.clone(),
            task: s.task_statement.clone(),
            started_at: s.started_at,
            deadline_at: s.deadline_at,
            remaining_ms: (s.deadline_at - now).max(0),
            button_order_seed: s.button_order_seed,
            button_order: s.button_order(),
            status: s.status,
            messages: s.messages.clone(),
            survey_submitted: s.survey.is_some(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostMessage {
    pub persona: PersonaId,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: Message,
    pub session: SessionView,
}

#[derive(Debug)]
pub enum ApiError {
    Session(SessionError),
    Survey(SurveyError),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, items) = match &self {
            ApiError::Session(e) => {
                let (status, code) = match e {
                    SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                    SessionError::SessionBusy => (StatusCode::CONFLICT, "session_busy"),
                    SessionError::SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
                    SessionError::SurveyAlreadySubmitted => (StatusCode::CONFLICT, "survey_already_submitted"),
                    SessionError::SessionExpired { .. } => (StatusCode::GONE, "session_expired"),
                    SessionError::EmptyMessage => (StatusCode::UNPROCESSABLE_ENTITY, "empty_message"),
                    SessionError::InvalidArgument(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument"),
                    SessionError::UpstreamFailure(_) => (StatusCode::BAD_GATEWAY, "upstream_failure"),
                    SessionError::StorageFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
                };
                (status, code, Vec::new())
            }
            ApiError::Survey(SurveyError::Validation(items)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation_error", items.clone())
            }
            ApiError::Survey(e) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_error", vec![e.to_string()]),
        };
        if status.is_server_error() {
            tracing::error!(error = ?self, "request failed");
        }
        let message = match &self {
            ApiError::Session(e) => e.to_string(),
            ApiError::Survey(e) => e.to_string(),
        };
        (status, Json(json!({ "error": code, "message": message, "items": items }))).into_response()
    }
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(fetch))
        .route("/sessions/{id}/messages", post(send_message))
        .route("/sessions/{id}/survey", post(submit_survey))
        .route("/admin/export", get(export))
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create(State(app): Shared) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let now = app.clock.now_ms();
    let session = create_session(&app.settings, app.treatment_probability, None, now)?;
    let view = SessionView::of(&session, now);
    app.store.insert(session)?;
    tracing::info!(session_id = %view.session_id, "session created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn fetch(State(app): Shared, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let mut lease = app.store.lease(&id).await?;
    let now = app.clock.now_ms();
    let mut s = lease.session().clone();
    if app.engine.expire_if_due(&mut s, now) {
        lease.commit(s.clone(), now)?;
    }
    Ok(Json(SessionView::of(&s, now)))
}

/// One message per session at a time: a second request while a reply is
/// pending gets `409 session_busy`.
async fn send_message(
    State(app): Shared,
    Path(id): Path<String>,
    Json(body): Json<PostMessage>,
) -> Result<Json<MessageReply>, ApiError> {
    let mut lease = app.store.try_lease(&id)?;
    let now = app.clock.now_ms();
    let mut s = lease.session().clone();
    let outcome = app.engine.post_message(&mut s, body.persona, &body.text, now).await;
    if &s != lease.session() {
        lease.commit(s.clone(), app.clock.now_ms())?;
    }
    let reply = outcome?;
    Ok(Json(MessageReply { reply, session: SessionView::of(&s, app.clock.now_ms()) }))
}

/// Accepted while active or after timing out. A session that was still
/// active becomes `submitted`; a timed-out one keeps its status.
async fn submit_survey(
    State(app): Shared,
    Path(id): Path<String>,
    Json(draft): Json<SurveyDraft>,
) -> Result<Json<SessionView>, ApiError> {
    let mut lease = app.store.lease(&id).await?;
    let now = app.clock.now_ms();
    let mut s = lease.session().clone();
    if s.survey.is_some() {
        return Err(SessionError::SurveyAlreadySubmitted.into());
    }
    if s.status == SessionStatus::Excluded {
        return Err(SessionError::SessionClosed(s.status).into());
    }
    let response = draft.into_response().map_err(ApiError::Survey)?;
    app.engine.expire_if_due(&mut s, now);
    if s.status == SessionStatus::Active {
        s.status = SessionStatus::Submitted;
    }
    s.survey = Some(response);
    lease.commit(s.clone(), now)?;
    Ok(Json(SessionView::of(&s, now)))
}

async fn export(State(app): Shared, Query(filter): Query<SessionFilter>) -> Result<Response, ApiError> {
    let mut body = Vec::new();
    app.store.export(&filter, &mut body).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Serve until `shutdown` resolves, then let in-flight requests finish.
/// Every event is synced to disk when committed, so nothing is buffered.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            tracing::warn!(error = %e, "cannot listen for ctrl-c");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                tracing::warn!(error = %e, "cannot listen for SIGTERM");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
