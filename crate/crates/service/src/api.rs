//! HTTP API for creating runs, following their progress, and answering
//! human-oracle batches.
//!
//! | method | path                  | success                      |
//! |--------|-----------------------|------------------------------|
//! | POST   | `/runs`               | 201 `{"run_id"}`             |
//! | GET    | `/runs/{id}`          | 200 run record               |
//! | GET    | `/runs/{id}/batch`    | 200 pending batch, 204 none  |
//! | POST   | `/runs/{id}/labels`   | 200                          |
//! | GET    | `/runs/{id}/metrics`  | 200 points or progress       |
//!
//! Unknown runs are 404. Label submissions answer 422 when incomplete and 409
//! when they contradict an earlier answer or the run takes no labels.

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use raremine::dataset::Label;
use raremine::metrics::evaluate;
use raremine::oracle::{HumanQueue, OracleError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{OracleKind, RunConfig};
use crate::runner::{self, has_full_truth, Progress, RunInputs, RunState, SharedProgress};

/// Environment variable holding the address `serve` binds to.
pub const BIND_ENV: &str = "RAREMINE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

pub struct RunHandle {
    pub id: String,
    pub config: RunConfig,
    pub progress: SharedProgress,
    pub queue: Option<Arc<HumanQueue>>,
    pub inputs: Arc<RunInputs>,
    pub ledger: PathBuf,
}

impl RunHandle {
    pub fn record(&self) -> Value {
        let p = self.progress.lock().unwrap();
        json!({
            "run_id": self.id,
            "state": p.state,
            "iteration": p.iteration,
            "ledger_path": self.ledger,
            "config": self.config,
            "error": p.error,
            "warnings": p.log.warnings,
        })
    }
}

#[derive(Default)]
pub struct AppState {
    runs: Mutex<HashMap<String, Arc<RunHandle>>>,
    next_id: AtomicU64,
    /// Relative paths in posted configs resolve against this directory.
    pub base_dir: PathBuf,
}

impl AppState {
    pub fn new(base_dir: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            base_dir,
            ..AppState::default()
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<RunHandle>> {
        self.runs.lock().unwrap().get(id).cloned()
    }

    /// Registers a run and starts its worker thread.
    pub fn start_run(&self, config: RunConfig, inputs: RunInputs) -> Result<Arc<RunHandle>, ApiError> {
        let ledger = runner::ledger_path(&config);
        let mut runs = self.runs.lock().unwrap();
        let busy = runs.values().any(|h| {
            h.ledger == ledger && !matches!(h.progress.lock().unwrap().state, RunState::Done | RunState::Failed)
        });
        if busy {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("another active run writes {}", ledger.display()),
            ));
        }
        let id = format!("run-{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1);
        let queue = (config.oracle.kind == OracleKind::Human).then(HumanQueue::new);
        let progress = Arc::new(Mutex::new(Progress::new(config.strategy)));
        let inputs = Arc::new(inputs);
        let handle = Arc::new(RunHandle {
            id: id.clone(),
            config: config.clone(),
            progress: Arc::clone(&progress),
            queue: queue.clone(),
            inputs: Arc::clone(&inputs),
            ledger,
        });
        runs.insert(id, Arc::clone(&handle));
        drop(runs);
        std::thread::spawn(move || {
            let _ = runner::execute(&config, &inputs, &progress, queue);
        });
        Ok(handle)
    }

    /// Cancels every human wait so worker threads can finish.
    pub fn shutdown(&self) {
        for h in self.runs.lock().unwrap().values() {
            if let Some(q) = &h.queue {
                q.close();
            }
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown run {id:?}"))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/batch", get(get_batch))
        .route("/runs/{id}/labels", post(post_labels))
        .route("/runs/{id}/metrics", get(get_metrics))
        .with_state(state)
}

async fn create_run(State(state): State<Arc<AppState>>, Json(body): Json<Value>) -> Result<Response, ApiError> {
    let base = state.base_dir.clone();
    let st = Arc::clone(&state);
    tokio::task::spawn_blocking(move || {
        let config = RunConfig::from_value(body, &base).map_err(|e| {
            ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": e.to_string(), "pointer": e.pointer }),
            }
        })?;
        let inputs = runner::load_inputs(&config).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let handle = st.start_run(config, inputs)?;
        Ok((StatusCode::CREATED, Json(json!({ "run_id": handle.id }))).into_response())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    Ok(Json(h.record()))
}

async fn get_batch(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    match h.queue.as_ref().and_then(|q| q.pending()) {
        Some(batch) => Ok(Json(batch).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemLabel {
    pub id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSubmission {
    pub batch_id: String,
    pub labels: Vec<ItemLabel>,
}

async fn post_labels(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(sub): Json<LabelSubmission>,
) -> Result<Json<Value>, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    let Some(queue) = &h.queue else {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("run {id} does not take human labels")));
    };
    let pairs: Vec<(String, Label)> = sub.labels.into_iter().map(|l| (l.id, l.label)).collect();
    let before = h.progress.lock().unwrap().log.iterations.len();
    let already_answered = matches!(queue.poll_answers(&sub.batch_id), Ok(Some(_)));
    queue.submit(&sub.batch_id, &pairs).map_err(|e| match e {
        OracleError::Partial { missing } => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "incomplete submission", "missing": missing }),
        },
        OracleError::Extraneous { extra } => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "ids outside the batch", "extra": extra }),
        },
        OracleError::Contradiction { id } => ApiError::new(StatusCode::CONFLICT, format!("label for {id:?} contradicts an earlier answer")),
        OracleError::UnknownBatch(b) => ApiError::new(StatusCode::NOT_FOUND, format!("unknown batch {b:?}")),
        other => ApiError::new(StatusCode::CONFLICT, other.to_string()),
    })?;
    // Acknowledge once the worker has written the batch to the ledger.
    if !already_answered {
        for _ in 0..2000 {
            {
                let p = h.progress.lock().unwrap();
                if p.log.iterations.len() > before || matches!(p.state, RunState::Failed | RunState::Done) {
                    break;
                }
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
    let state = h.progress.lock().unwrap().state;
    Ok(Json(json!({ "batch_id": sub.batch_id, "accepted": pairs.len(), "state": state })))
}

/// Served metrics: evaluation points when the pool has ground truth, labeled
/// counts otherwise.
pub fn metrics_body(h: &RunHandle) -> Result<Value, ApiError> {
    let p = h.progress.lock().unwrap();
    if has_full_truth(&h.inputs.pool) {
        let points = evaluate(&p.log, &h.inputs.pool).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(json!({ "run_id": h.id, "state": p.state, "points": points }))
    } else {
        let mut labeled = 0usize;
        let mut positives = 0usize;
        let progress: Vec<Value> = p
            .log
            .iterations
            .iter()
            .map(|it| {
                labeled += it.batch.len();
                positives += it.positives();
                json!({ "iteration": it.iteration, "labeled_cum": labeled, "positives_cum": positives })
            })
            .collect();
        Ok(json!({ "run_id": h.id, "state": p.state, "progress": progress }))
    }
}

async fn get_metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    metrics_body(&h).map(Json)
}

/// Binds to `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    serve_until(state, addr, std::future::pending()).await
}

/// Serves until ctrl-c or until `done` resolves, then cancels pending human
/// waits.
pub async fn serve_until(state: Arc<AppState>, addr: &str, done: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    let app = router(Arc::clone(&state));
    let res = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = done => {}
            }
        })
        .await;
    state.shutdown();
    res
}
