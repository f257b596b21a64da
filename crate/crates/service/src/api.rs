//! HTTP/JSON API over the shared session state.

use crate::state::{Event, JudgmentError, SharedState};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use std::convert::Infallible;
use std::net::SocketAddr;
use tokio::sync::broadcast::error::RecvError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGeometry {
    pub id: String,
    pub width: f64,
    pub goal_progress: f64,
    pub centerline: Vec<[f64; 2]>,
    pub left_wall: Vec<[f64; 2]>,
    pub right_wall: Vec<[f64; 2]>,
    /// Corner points of each obstacle rectangle.
    pub obstacles: Vec<[[f64; 2]; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgmentBody {
    pub trajectory_id: u64,
    pub accept: bool,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct MetricsQuery {
    /// Only records of episodes after this one.
    pub after: Option<u64>,
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/task", get(task))
        .route("/api/pending", get(pending))
        .route("/api/judgment", post(judgment))
        .route("/api/metrics", get(metrics))
        .route("/api/events", get(events))
        .with_state(state)
}

async fn status(State(s): State<SharedState>) -> Response {
    Json(s.lock().status.clone()).into_response()
}

async fn task(State(s): State<SharedState>) -> Json<TaskGeometry> {
    let g = s.lock();
    let c = &g.task.corridor;
    let pts = |v: &[magaisil_core::world::Vec2]| v.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
    Json(TaskGeometry {
        id: g.task.id.clone(),
        width: c.width(),
        goal_progress: c.goal_progress(),
        centerline: pts(c.centerline()),
        left_wall: pts(c.left_wall()),
        right_wall: pts(c.right_wall()),
        obstacles: c.obstacle_corners().iter().map(|q| q.map(|p| [p.x, p.y])).collect(),
    })
}

async fn pending(State(s): State<SharedState>) -> Response {
    Json(s.lock().pending.values().cloned().collect::<Vec<_>>()).into_response()
}

async fn judgment(State(s): State<SharedState>, Json(body): Json<JudgmentBody>) -> Response {
    match s.submit_judgment(body.trajectory_id, body.accept) {
        Ok(()) => (StatusCode::OK, Json(serde_json::json!({ "trajectory_id": body.trajectory_id, "accept": body.accept })))
            .into_response(),
        Err(e @ (JudgmentError::Unknown(_) | JudgmentError::AlreadyDecided(_))) => {
            (StatusCode::CONFLICT, Json(serde_json::json!({ "error": e.to_string() }))).into_response()
        }
    }
}

async fn metrics(State(s): State<SharedState>, Query(q): Query<MetricsQuery>) -> Response {
    let g = s.lock();
    let records: Vec<_> = match q.after {
        Some(after) => g.metrics.iter().filter(|r| r.episode > after).cloned().collect(),
        None => g.metrics.clone(),
    };
    Json(records).into_response()
}

/// Server-sent events: `episode` for every metrics record, `replacement`
/// when a demonstration set is replaced. Data is the metrics record JSON.
async fn events(State(s): State<SharedState>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = s.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let (name, rec) = match &ev {
                        Event::Episode(r) => ("episode", r),
                        Event::Replacement(r) => ("replacement", r),
                    };
                    let data = serde_json::to_string(rec).expect("metrics record");
                    return Some((Ok(SseEvent::default().event(name).data(data)), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// A running API server on its own thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `host:port` (port 0 picks a free one) and serves until stopped.
pub fn serve_api(state: SharedState, host: &str, port: u16) -> Result<ServerHandle, String> {
    let bind = format!("{host}:{port}");
    let (ready_tx, ready_rx) = std::sync::mpsc::channel::<Result<SocketAddr, String>>();
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("api".into())
        .spawn(move || {
            let rt = match tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build() {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = ready_tx.send(Err(e.to_string()));
                    return;
                }
            };
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(&bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = ready_tx.send(Err(format!("{bind}: {e}")));
                        return;
                    }
                };
                let addr = listener.local_addr().expect("bound socket has an address");
                let _ = ready_tx.send(Ok(addr));
                let app = router(state);
                let served = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                });
                if let Err(e) = served.await {
                    log::error!("API server stopped: {e}");
                }
            });
        })
        .map_err(|e| e.to_string())?;
    let addr = ready_rx.recv().map_err(|_| "API thread exited before binding".to_string())??;
    log::info!("judging API listening on http://{addr}");
    Ok(ServerHandle { addr, shutdown: Some(shutdown_tx), thread: Some(thread) })
}
