//! HTTP front end for live sessions. Tables are solved once at startup;
//! requests only look them up.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use opaque_core::config::ExperimentConfig;
use opaque_core::envs::EnvConfig;
use opaque_core::session::{sample_type, Algorithm, Catalog, Session, SessionError, Status};
use opaque_core::{AugmentedState, HumanModel, SolutionTable, SolveOptions};

pub struct AppState {
    catalog: Catalog,
    model: HumanModel,
    transparent_lambda: f64,
    // tables for sessions that override env params, keyed by the params JSON
    custom: RwLock<HashMap<(String, Algorithm), Arc<SolutionTable>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    rng: Mutex<ChaCha8Rng>,
    log_path: PathBuf,
    log_lock: Mutex<()>,
}

impl AppState {
    /// Solves every configured environment for both algorithms.
    pub fn from_config(cfg: &ExperimentConfig) -> opaque_core::Result<Self> {
        let model = cfg.primary_model()?;
        let svc = &cfg.service;
        let catalog = Catalog::build(&svc.envs, &model, svc.transparent_lambda)?;
        Ok(AppState {
            catalog,
            model,
            transparent_lambda: svc.transparent_lambda,
            custom: RwLock::default(),
            sessions: RwLock::default(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(cfg.seed)),
            log_path: svc.log_path.clone(),
            log_lock: Mutex::new(()),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}")))
    }

    fn append_log(&self, record: &Value) -> std::io::Result<()> {
        let _guard = self.log_lock.lock().expect("log lock poisoned");
        let mut f = OpenOptions::new().create(true).append(true).open(&self.log_path)?;
        writeln!(f, "{record}")
    }

    /// Env and table for a request, solving on first use when params override
    /// the configured ones.
    fn table_for(
        &self,
        env_id: &str,
        algorithm: Algorithm,
        params: Option<&Value>,
    ) -> Result<(EnvConfig, Arc<SolutionTable>), ApiError> {
        let unprocessable = |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", msg);
        let (base, table) =
            self.catalog.get(env_id, algorithm).ok_or_else(|| unprocessable(format!("unknown env {env_id:?}")))?;
        let Some(params) = params else {
            return Ok((base.clone(), table.clone()));
        };
        let mut doc = serde_json::to_value(base).map_err(|e| unprocessable(e.to_string()))?;
        doc["params"] = params.clone();
        let env: EnvConfig = serde_json::from_value(doc).map_err(|e| unprocessable(e.to_string()))?;
        let key = (serde_json::to_string(&env).unwrap_or_default(), algorithm);
        if let Some(t) = self.custom.read().expect("table cache poisoned").get(&key) {
            return Ok((env, t.clone()));
        }
        let spec = env.build().map_err(|e| unprocessable(e.to_string()))?;
        let root = AugmentedState::root(env.start_state(&spec), spec.prior().clone());
        let lambda = match algorithm {
            Algorithm::Opaque => 0.0,
            Algorithm::Transparent => self.transparent_lambda,
        };
        let model = self.model.with_prior(spec.prior().clone());
        let table = opaque_core::solve_with(&spec, &model, &[root], &SolveOptions { lambda, ..Default::default() })
            .map_err(|e| unprocessable(e.to_string()))?;
        let table = Arc::new(table);
        self.custom.write().expect("table cache poisoned").insert(key, table.clone());
        Ok((env, table))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into() }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, kind) = match &e {
            SessionError::WrongPhase(_) => (StatusCode::CONFLICT, "wrong_phase"),
            SessionError::StaleStep { .. } => (StatusCode::CONFLICT, "stale_step"),
            SessionError::UnknownAction(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_action"),
            SessionError::BadGuess(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_guess"),
            SessionError::Core(c) => (StatusCode::INTERNAL_SERVER_ERROR, c.kind()),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "message": self.message}))).into_response()
    }
}

#[derive(Deserialize)]
struct CreateRequest {
    env: String,
    #[serde(default = "opaque")]
    algorithm: Algorithm,
    params: Option<Value>,
    /// Robot type label; scripted clients only.
    force_type: Option<String>,
}

fn opaque() -> Algorithm {
    Algorithm::Opaque
}

#[derive(Deserialize)]
struct ActionRequest {
    human_action: String,
    /// Step the client believes it is at; a mismatch is a double submit.
    t: Option<usize>,
}

#[derive(Deserialize)]
struct GuessRequest {
    type_guess: String,
    preference: u8,
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

async fn create(State(app): State<Arc<AppState>>, Json(req): Json<CreateRequest>) -> Result<Json<Value>, ApiError> {
    let worker = app.clone();
    let (env_id, algorithm, params) = (req.env.clone(), req.algorithm, req.params.clone());
    let (env, table) = tokio::task::spawn_blocking(move || worker.table_for(&env_id, algorithm, params.as_ref()))
        .await
        .map_err(internal)??;
    let spec = table.spec();
    let true_type = match &req.force_type {
        Some(label) => spec.robot_types().iter().position(|t| &t.label == label).ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", format!("unknown robot type {label:?}"))
        })?,
        None => sample_type(&mut *app.rng.lock().expect("rng poisoned"), spec.prior()),
    };
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::new(id.clone(), env, algorithm, table.clone(), true_type).map_err(internal)?;
    let body = json!({
        "session_id": id,
        "env": req.env,
        "algorithm": algorithm,
        "state": session.render(),
        "t": 0,
        "horizon": spec.horizon(),
        "action_menu": session.menu(),
        "robot_types": spec.robot_types().iter().map(|t| &t.label).collect::<Vec<_>>(),
    });
    app.sessions.write().expect("session map poisoned").insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, env = %req.env, ?algorithm, "session created");
    Ok(Json(body))
}

async fn act(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let mut s = session.lock().expect("session poisoned");
    let out = s.act(&req.human_action, req.t)?;
    Ok(Json(serde_json::to_value(out).map_err(internal)?))
}

async fn guess(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<GuessRequest>,
) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let (out, record) = {
        let mut s = session.lock().expect("session poisoned");
        let out = s.guess(&req.type_guess, req.preference)?;
        (out, s.record())
    };
    if let Err(e) = app.append_log(&record) {
        tracing::error!(session = %id, error = %e, "could not append session log");
    }
    Ok(Json(serde_json::to_value(out).map_err(internal)?))
}

async fn transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    if s.status() != Status::Closed {
        return Err(ApiError::new(StatusCode::CONFLICT, "wrong_phase", "transcript is available after the guess"));
    }
    Ok(Json(s.record()))
}

async fn envs(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(app.catalog.describe())
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/envs", get(envs))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(transcript))
        .route("/sessions/{id}/action", post(act))
        .route("/sessions/{id}/guess", post(guess))
        .layer(cors)
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
