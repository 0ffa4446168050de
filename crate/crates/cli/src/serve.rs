//! In-memory session service for the browser console.
//!
//! Each session owns a scene and at most one open dialogue. Mutating
//! requests take the session lock without waiting; a second request that
//! arrives while one is running gets 409.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cmdtriage_core::prompt::{GoalCommand, SceneDescription};
use cmdtriage_core::triage::{DialogueState, DialogueStatus, TriageConfig, TriageError, TriagePipeline, TriageResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};
use tower_http::cors::CorsLayer;

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);
const EVICTION_PERIOD: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> Self {
        match e {
            TriageError::Gateway(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "backend_error", e.to_string())
            }
            TriageError::Prompt(_) => Self::bad_request(e.to_string()),
            TriageError::DialogueClosed(_) | TriageError::NoPendingQuestion => {
                Self::new(StatusCode::CONFLICT, "no_pending_question", e.to_string())
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

struct SessionInner {
    scene: SceneDescription,
    pipeline: TriagePipeline,
    dialogue: Option<DialogueState>,
    last_result: Option<TriageResult>,
}

struct Session {
    created_at_ms: u64,
    last_used: Mutex<Instant>,
    inner: Arc<AsyncMutex<SessionInner>>,
}

impl Session {
    fn touch(&self) {
        *self.last_used.lock().expect("session clock poisoned") = Instant::now();
    }
}

struct Shared {
    pipeline: TriagePipeline,
    config: TriageConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    idle_timeout: Duration,
}

/// Router state: the prototype pipeline and the session table.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(pipeline: TriagePipeline, config: TriageConfig) -> Self {
        Self::with_idle_timeout(pipeline, config, DEFAULT_IDLE_TIMEOUT)
    }

    pub fn with_idle_timeout(pipeline: TriagePipeline, config: TriageConfig, idle_timeout: Duration) -> Self {
        Self(Arc::new(Shared {
            pipeline,
            config,
            sessions: Mutex::new(HashMap::new()),
            idle_timeout,
        }))
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<Session>>> {
        self.0.sessions.lock().expect("session table poisoned")
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }

    /// Drop sessions idle for longer than the timeout. Sessions with a
    /// request in flight are kept. Returns how many were removed.
    pub fn evict_idle(&self) -> usize {
        let timeout = self.0.idle_timeout;
        let mut sessions = self.sessions();
        let before = sessions.len();
        sessions.retain(|_, s| {
            let idle = s.last_used.lock().expect("session clock poisoned").elapsed();
            idle <= timeout || s.inner.try_lock().is_err()
        });
        before - sessions.len()
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let session = self.sessions().get(id).cloned().ok_or_else(|| ApiError::not_found(id))?;
        session.touch();
        Ok(session)
    }

    fn lock(&self, id: &str) -> Result<OwnedMutexGuard<SessionInner>, ApiError> {
        self.session(id)?
            .inner
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, "session_busy", "another request on this session is running"))
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CreateBody {
    Wrapped { scene: SceneDescription },
    Bare(SceneDescription),
}

#[derive(Deserialize)]
struct CommandBody {
    goal: String,
}

#[derive(Deserialize)]
struct AnswerBody {
    answer: String,
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub session_id: String,
    pub created_at_ms: u64,
    pub epsilon: f64,
}

/// One triage round as returned by the command and answer routes.
#[derive(Debug, Serialize)]
pub struct TurnView {
    pub session_id: String,
    #[serde(flatten)]
    pub result: TriageResult,
    pub status: DialogueStatus,
    pub pending_question: Option<String>,
    pub rounds_used: usize,
    pub goal: GoalCommand,
    pub epsilon: f64,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub created_at_ms: u64,
    pub scene: SceneDescription,
    pub epsilon: f64,
    pub dialogue: Option<DialogueState>,
    pub last_result: Option<TriageResult>,
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let scene = match parse::<CreateBody>(&body)? {
        CreateBody::Wrapped { scene } | CreateBody::Bare(scene) => scene,
    };
    scene
        .validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_scene", e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created_at_ms = now_ms();
    let session = Session {
        created_at_ms,
        last_used: Mutex::new(Instant::now()),
        inner: Arc::new(AsyncMutex::new(SessionInner {
            scene,
            pipeline: app.0.pipeline.forked(),
            dialogue: None,
            last_result: None,
        })),
    };
    app.sessions().insert(id.clone(), Arc::new(session));
    tracing::info!(session = %id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            created_at_ms,
            epsilon: app.0.config.epsilon,
        }),
    ))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let session = app.session(&id)?;
    let inner = session.inner.lock().await;
    Ok(Json(SessionView {
        session_id: id,
        created_at_ms: session.created_at_ms,
        scene: inner.scene.clone(),
        epsilon: app.0.config.epsilon,
        dialogue: inner.dialogue.clone(),
        last_result: inner.last_result.clone(),
    }))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

/// Classify the dialogue's current goal on a blocking thread, keeping the
/// session locked throughout.
async fn run_turn(app: &AppState, id: String, mut guard: OwnedMutexGuard<SessionInner>) -> Result<Json<TurnView>, ApiError> {
    let config = app.0.config.clone();
    tokio::task::spawn_blocking(move || {
        let inner = &mut *guard;
        let dialogue = inner.dialogue.as_mut().expect("turn needs a dialogue");
        let result = inner.pipeline.advance(dialogue, &config)?;
        inner.last_result = Some(result.clone());
        Ok(Json(TurnView {
            session_id: id,
            result,
            status: dialogue.status,
            pending_question: dialogue.pending_question.clone(),
            rounds_used: dialogue.rounds_used,
            goal: dialogue.goal.clone(),
            epsilon: config.epsilon,
        }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn command(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<TurnView>, ApiError> {
    let body: CommandBody = parse(&body)?;
    let goal = GoalCommand::new(body.goal);
    goal.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut guard = app.lock(&id)?;
    if let Some(question) = guard.dialogue.as_ref().and_then(|d| d.pending_question.as_ref()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "awaiting_answer",
            format!("answer the pending question first: {question}"),
        ));
    }
    let scene = guard.scene.clone();
    guard.dialogue = Some(DialogueState::new(goal, scene));
    run_turn(&app, id, guard).await
}

async fn answer(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<TurnView>, ApiError> {
    let body: AnswerBody = parse(&body)?;
    if body.answer.trim().is_empty() {
        return Err(ApiError::bad_request("answer is empty"));
    }
    let mut guard = app.lock(&id)?;
    match guard.dialogue.as_mut() {
        Some(d) if d.pending_question.is_some() => d.record_answer(body.answer)?,
        _ => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "no_pending_question",
                "this session has no question waiting for an answer",
            ))
        }
    }
    run_turn(&app, id, guard).await
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/command", post(command))
        .route("/sessions/{id}/answer", post(answer))
        .fallback(fallback)
        .layer(CorsLayer::permissive())
        .with_state(app)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    tracing::info!("shutting down");
}

/// Bind and serve until SIGINT or SIGTERM.
pub async fn serve(app: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let evictor = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(EVICTION_PERIOD);
        loop {
            tick.tick().await;
            let n = evictor.evict_idle();
            if n > 0 {
                tracing::info!(evicted = n, "dropped idle sessions");
            }
        }
    });
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown_signal()).await
}
