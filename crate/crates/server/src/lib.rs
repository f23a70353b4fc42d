//! Episode wire service. A thin HTTP adapter over the episode engine: every
//! rule is enforced by [`Simulator::step`], the server only keeps sessions
//! and translates errors.
//!
//! Endpoints:
//! - `POST /sessions` with `{env_id, task_id}` starts an episode
//! - `GET /sessions/{id}/observation`
//! - `POST /sessions/{id}/action` with `{seq?, action}`
//! - `GET /sessions/{id}/result`
//! - `GET /tasks`

pub mod render;
pub mod wire;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use refnav_core::episode::{EpisodeState, Observation, Simulator, StepOutcome, Trajectory};
use refnav_core::metrics::evaluate;
use refnav_core::{EpisodeError, Task};

use wire::{
    ActionRequest, ActionResponse, CreateSession, ErrorBody, SessionView, TaskListing, WireObservation, WireResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Sessions untouched for this long are dropped.
    pub idle_timeout_secs: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { idle_timeout_secs: 900.0 }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: ServerConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if !(cfg.idle_timeout_secs.is_finite() && cfg.idle_timeout_secs >= 0.0) {
            return Err("idle_timeout_secs must be a non-negative number".into());
        }
        Ok(cfg)
    }

    fn idle_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.idle_timeout_secs)
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", r.body_text())
    }
}

impl From<EpisodeError> for ApiError {
    fn from(e: EpisodeError) -> Self {
        let (status, code) = match &e {
            EpisodeError::Finished => (StatusCode::CONFLICT, "episode_finished"),
            EpisodeError::DuplicateDetection => (StatusCode::CONFLICT, "duplicate_detection"),
            EpisodeError::NavigationFinished => (StatusCode::CONFLICT, "navigation_finished"),
            EpisodeError::StepBudget(_) => (StatusCode::CONFLICT, "step_budget"),
            EpisodeError::IllegalMove(_) => (StatusCode::BAD_REQUEST, "illegal_move"),
            EpisodeError::InvalidDetection(_) => (StatusCode::BAD_REQUEST, "invalid_detection"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct World {
    sim: Arc<Simulator>,
    tasks: HashMap<String, Task>,
    order: Vec<String>,
}

struct Session {
    sim: Arc<Simulator>,
    state: EpisodeState,
    observation: Observation,
    seq: u64,
    result: Option<WireResult>,
    last_active: Instant,
}

pub struct AppState {
    worlds: HashMap<String, World>,
    world_order: Vec<String>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    config: ServerConfig,
}

impl AppState {
    /// Worlds are keyed by environment id; tasks keep their given order.
    pub fn new(worlds: Vec<(Arc<Simulator>, Vec<Task>)>, config: ServerConfig) -> Self {
        let mut map = HashMap::new();
        let mut world_order = Vec::new();
        for (sim, tasks) in worlds {
            let id = sim.env().id.clone();
            world_order.push(id.clone());
            map.insert(
                id,
                World {
                    order: tasks.iter().map(|t| t.id.clone()).collect(),
                    tasks: tasks.into_iter().map(|t| (t.id.clone(), t)).collect(),
                    sim,
                },
            );
        }
        AppState {
            worlds: map,
            world_order,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            config,
        }
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    fn expire(&self, now: Instant) {
        let timeout = self.config.idle_timeout();
        self.sessions
            .lock()
            .expect("session table")
            .retain(|_, s| now.duration_since(s.lock().expect("session").last_active) <= timeout);
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.expire(Instant::now());
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

fn wire_observation(sim: &Simulator, obs: &Observation) -> WireObservation {
    WireObservation { observation: obs.clone(), render: render::render(sim, obs) }
}

fn finish(id: &str, sim: &Simulator, s: &Session, traj: Trajectory) -> Result<WireResult, ApiError> {
    let metrics = evaluate(sim, &s.state.task, &traj)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "scoring_failed", e.to_string()))?;
    Ok(WireResult { session_id: id.to_string(), seq: s.seq, trajectory: traj, metrics })
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<SessionView> {
    let Json(req) = body?;
    app.expire(Instant::now());
    let world = app.worlds.get(&req.env_id).ok_or_else(|| ApiError::not_found("environment", &req.env_id))?;
    let task = world.tasks.get(&req.task_id).ok_or_else(|| ApiError::not_found("task", &req.task_id))?;
    let (state, observation) = world
        .sim
        .start_episode(task)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_task", e.to_string()))?;
    let id = format!("s{:08}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let view = SessionView {
        session_id: id.clone(),
        seq: 0,
        observation: wire_observation(&world.sim, &observation),
    };
    let session = Session {
        sim: world.sim.clone(),
        state,
        observation,
        seq: 0,
        result: None,
        last_active: Instant::now(),
    };
    app.sessions
        .lock()
        .expect("session table")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(view))
}

async fn get_observation(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let handle = app.session(&id)?;
    let mut s = handle.lock().expect("session");
    s.last_active = Instant::now();
    Ok(Json(SessionView {
        session_id: id,
        seq: s.seq,
        observation: wire_observation(&s.sim, &s.observation),
    }))
}

async fn post_action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> ApiResult<ActionResponse> {
    let handle = app.session(&id)?;
    let Json(req) = body?;
    let mut guard = handle.lock().expect("session");
    let s = &mut *guard;
    s.last_active = Instant::now();
    if let Some(seq) = req.seq {
        if seq != s.seq {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "sequence_mismatch",
                format!("expected seq {}, got {seq}", s.seq),
            ));
        }
    }
    let sim = s.sim.clone();
    match sim.step(&mut s.state, req.action)? {
        StepOutcome::Continue(obs) => {
            s.seq += 1;
            s.observation = obs;
            Ok(Json(ActionResponse::Continue(SessionView {
                session_id: id,
                seq: s.seq,
                observation: wire_observation(&sim, &s.observation),
            })))
        }
        StepOutcome::Finished(traj) => {
            s.seq += 1;
            s.observation = sim.observe(&s.state);
            let result = finish(&id, &sim, s, traj)?;
            s.result = Some(result.clone());
            Ok(Json(ActionResponse::Finished(result)))
        }
    }
}

async fn get_result(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<WireResult> {
    let handle = app.session(&id)?;
    let mut s = handle.lock().expect("session");
    s.last_active = Instant::now();
    s.result
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "episode_running", format!("session `{id}` has not finished")))
}

async fn list_tasks(State(app): State<Arc<AppState>>) -> Json<Vec<TaskListing>> {
    let mut out = Vec::new();
    for env_id in &app.world_order {
        let world = &app.worlds[env_id];
        for tid in &world.order {
            let t = &world.tasks[tid];
            out.push(TaskListing {
                env_id: env_id.clone(),
                task_id: t.id.clone(),
                instruction: t.instruction.join(" "),
                start_viewpoint: t.start_viewpoint.clone(),
            });
        }
    }
    Json(out)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/observation", get(get_observation))
        .route("/sessions/{id}/action", post(post_action))
        .route("/sessions/{id}/result", get(get_result))
        .route("/tasks", get(list_tasks))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
