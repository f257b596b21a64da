//! State shared between the training worker (single writer) and the API.

use crate::config::SessionConfig;
use crate::metrics::MetricsRecord;
use magaisil_core::algo::{AgentKind, DemoSummary, JudgeRequest, Provenance};
use magaisil_core::world::Task;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};
use tokio::sync::broadcast;

/// Most path points sent to a judge per vehicle.
pub const MAX_PATH_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingJudgment {
    pub trajectory_id: u64,
    pub agent: AgentKind,
    pub episode: u64,
    pub leader_path: Vec<[f64; 2]>,
    pub follower_path: Vec<[f64; 2]>,
    /// Advisory per-step evaluation rewards of this agent.
    pub eval_rewards: Vec<f64>,
    pub mean_eval_reward: f64,
    pub pairs: usize,
    pub term_reason: String,
    pub demos: DemoSummary,
    /// Unix seconds.
    pub created_at: f64,
}

impl PendingJudgment {
    pub fn from_request(r: &JudgeRequest<'_>) -> Self {
        let stride = r.path.len().div_ceil(MAX_PATH_POINTS).max(1);
        let mut idx: Vec<usize> = (0..r.path.len()).step_by(stride).collect();
        if let Some(&last) = idx.last() {
            if last + 1 != r.path.len() {
                idx.push(r.path.len() - 1);
            }
        }
        let t = r.trajectory;
        Self {
            trajectory_id: t.id,
            agent: t.agent,
            episode: t.episode,
            leader_path: idx.iter().map(|&i| [r.path[i].0.x, r.path[i].0.y]).collect(),
            follower_path: idx.iter().map(|&i| [r.path[i].1.x, r.path[i].1.y]).collect(),
            eval_rewards: t.eval_rewards(),
            mean_eval_reward: t.mean_eval_reward(),
            pairs: t.len(),
            term_reason: t.term_reason.as_str().to_string(),
            demos: r.demos,
            created_at: unix_now(),
        }
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub agent: AgentKind,
    pub pool_pairs: usize,
    pub pool_capacity: usize,
    pub demo_provenance: Provenance,
    pub demo_mean_eval_reward: f64,
    pub replacements: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Starting,
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub phase: Phase,
    pub config: SessionConfig,
    /// Episodes completed so far.
    pub episodes_done: u64,
    pub agents: Vec<AgentStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A verdict sent from the API to the worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub trajectory_id: u64,
    pub accept: bool,
    pub received_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Event {
    Episode(MetricsRecord),
    Replacement(MetricsRecord),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum JudgmentError {
    #[error("trajectory {0} is not awaiting judgment")]
    Unknown(u64),
    #[error("trajectory {0} was already judged")]
    AlreadyDecided(u64),
}

pub struct Inner {
    pub status: Status,
    pub task: Task,
    pub pending: BTreeMap<u64, PendingJudgment>,
    pub decided: BTreeSet<u64>,
    pub metrics: Vec<MetricsRecord>,
    verdicts: Option<mpsc::Sender<Verdict>>,
}

/// Cloneable handle on the session state.
#[derive(Clone)]
pub struct SharedState {
    inner: Arc<Mutex<Inner>>,
    events: broadcast::Sender<Event>,
}

impl SharedState {
    pub fn new(config: SessionConfig, task: Task) -> Self {
        let (events, _) = broadcast::channel(256);
        let status = Status { phase: Phase::Starting, config, episodes_done: 0, agents: Vec::new(), error: None };
        let inner = Inner {
            status,
            task,
            pending: BTreeMap::new(),
            decided: BTreeSet::new(),
            metrics: Vec::new(),
            verdicts: None,
        };
        Self { inner: Arc::new(Mutex::new(inner)), events }
    }

    pub fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub fn publish(&self, event: Event) {
        // no subscribers is fine
        let _ = self.events.send(event);
    }

    pub(crate) fn connect_verdicts(&self) -> mpsc::Receiver<Verdict> {
        let (tx, rx) = mpsc::channel();
        self.lock().verdicts = Some(tx);
        rx
    }

    /// Records a judgment for a pending trajectory. The first decision for a
    /// trajectory stands; anything else is a conflict.
    pub fn submit_judgment(&self, trajectory_id: u64, accept: bool) -> Result<(), JudgmentError> {
        let mut g = self.lock();
        if g.decided.contains(&trajectory_id) {
            return Err(JudgmentError::AlreadyDecided(trajectory_id));
        }
        if g.pending.remove(&trajectory_id).is_none() {
            return Err(JudgmentError::Unknown(trajectory_id));
        }
        g.decided.insert(trajectory_id);
        // sent while holding the lock so a timing-out worker sees it
        if let Some(tx) = &g.verdicts {
            let _ = tx.send(Verdict { trajectory_id, accept, received_at: unix_now() });
        }
        Ok(())
    }
}
