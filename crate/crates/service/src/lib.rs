//! Local HTTP interface to interactive synthesis sessions.
//!
//! Synthesis runs on blocking worker threads. Requests that start work wait
//! a short while for it and otherwise answer with status `synthesizing`;
//! clients then poll `GET /sessions/{id}`.

mod session;

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use datamig::datalog::evaluate;
use datamig::instance::{facts_to_instance, instance_to_facts, Instance};
use datamig::synth::{Interaction, Step, SynthError};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub use session::Status;
use session::{AnswerRequest, CreateRequest, Session};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Finished sessions are written here as `<id>.json`.
    pub audit_dir: Option<PathBuf>,
    /// How long a request waits for synthesis before returning `synthesizing`.
    pub respond_within: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            audit_dir: None,
            respond_within: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn conflict(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        AppState {
            config: Arc::new(config),
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`")))
    }

    /// Runs `job` off the request path, stores its outcome in the session,
    /// and returns the session's state once done or after the response
    /// deadline, whichever comes first.
    async fn run<F>(&self, shared: Shared, job: F) -> Value
    where
        F: FnOnce() -> (Option<Interaction>, Result<Step, SynthError>) + Send + 'static,
    {
        let (tx, rx) = oneshot::channel();
        let state = self.clone();
        let worker = shared.clone();
        tokio::spawn(async move {
            let (interaction, step) = match tokio::task::spawn_blocking(job).await {
                Ok(out) => out,
                Err(e) => (
                    None,
                    Err(SynthError::OracleRejected(format!("worker failed: {e}"))),
                ),
            };
            let mut s = worker.lock().unwrap();
            s.apply(interaction, step);
            if matches!(s.status, Status::Done | Status::Failed) {
                state.audit(&s);
            }
            let _ = tx.send(());
        });
        let _ = tokio::time::timeout(self.config.respond_within, rx).await;
        let snapshot = shared.lock().unwrap().snapshot();
        snapshot
    }

    fn audit(&self, s: &Session) {
        let Some(dir) = &self.config.audit_dir else {
            return;
        };
        let path = dir.join(format!("{}.json", s.id));
        let text = serde_json::to_string_pretty(&s.audit_record()).expect("JSON values serialize");
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|()| std::fs::write(&path, text)) {
            eprintln!("audit write to {} failed: {e}", path.display());
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let setup = parse_body::<CreateRequest>(&body)?
        .validate()
        .map_err(ApiError::bad_request)?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let shared = Arc::new(Mutex::new(Session::new(id.clone(), &setup)));
    state.sessions.lock().unwrap().insert(id, shared.clone());
    let snapshot = state
        .run(shared, move || {
            match Interaction::start(
                &setup.source,
                &setup.target,
                &setup.examples,
                &setup.options,
            ) {
                Ok((it, step)) => (Some(it), Ok(step)),
                Err(e) => (None, Err(e)),
            }
        })
        .await;
    Ok((StatusCode::CREATED, Json(snapshot)).into_response())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let shared = state.session(&id)?;
    let snapshot = shared.lock().unwrap().snapshot();
    Ok(Json(snapshot))
}

async fn answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let shared = state.session(&id)?;
    let request: AnswerRequest = parse_body(&body)?;
    let (mut interaction, output) = {
        let mut s = shared.lock().unwrap();
        if s.status != Status::AwaitingAnswer {
            return Err(ApiError::conflict(format!(
                "session is {}, not awaiting an answer",
                status_name(s.status)
            )));
        }
        let output = request.to_output(&s.target).map_err(|e| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("answer does not fit the target schema: {e}"),
            )
        })?;
        let interaction = s
            .interaction
            .take()
            .expect("awaiting sessions hold their interaction");
        s.status = Status::Synthesizing;
        s.answers += 1;
        (interaction, output)
    };
    let snapshot = state
        .run(shared, move || {
            let step = interaction.answer(&output);
            (Some(interaction), step)
        })
        .await;
    Ok(Json(snapshot))
}

async fn get_program(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().unwrap();
    match (s.program_text(), s.stats()) {
        (Some(program), Some(stats)) => Ok(Json(json!({ "program": program, "stats": stats }))),
        _ => Err(ApiError::conflict(format!(
            "session is {}, no program yet",
            status_name(s.status)
        ))),
    }
}

async fn migrate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let shared = state.session(&id)?;
    let (source, target, program) = {
        let s = shared.lock().unwrap();
        let Some(result) = &s.result else {
            return Err(ApiError::conflict(format!(
                "session is {}, no program yet",
                status_name(s.status)
            )));
        };
        (s.source.clone(), s.target.clone(), result.program.clone())
    };
    let json: Value = parse_body(&body)?;
    let instance =
        Instance::from_json(&source, &json).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let out = tokio::task::spawn_blocking(move || -> Result<Value, String> {
        let facts = instance_to_facts(&source, &instance).map_err(|e| e.to_string())?;
        let derived = evaluate(&program, &facts).map_err(|e| e.to_string())?;
        let migrated = facts_to_instance(&target, &derived).map_err(|e| e.to_string())?;
        Ok(migrated.to_json(&target))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    Ok(Json(out))
}

fn status_name(s: Status) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/program", get(get_program))
        .route("/sessions/{id}/migrate", post(migrate))
        .with_state(state)
}

/// Serves on the loopback interface until the process ends.
pub async fn serve(port: u16, config: ServiceConfig) -> std::io::Result<()> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
