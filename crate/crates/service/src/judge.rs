//! Judges used by sessions.

use crate::state::{PendingJudgment, SharedState, Verdict};
use magaisil_core::algo::{Judge, JudgeDecision, JudgeRequest, JudgeSource};
use std::collections::BTreeMap;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

/// Publishes each finished trajectory as a pending judgment and blocks until
/// the API delivers verdicts. Trajectories without a verdict by the deadline
/// are rejected and marked as timed out.
pub struct HumanJudge {
    state: SharedState,
    verdicts: Receiver<Verdict>,
    timeout: Duration,
}

impl HumanJudge {
    pub fn new(state: SharedState, timeout: Duration) -> Self {
        let verdicts = state.connect_verdicts();
        Self { state, verdicts, timeout }
    }
}

impl Judge for HumanJudge {
    fn judge_episode(&mut self, requests: &[JudgeRequest<'_>]) -> Vec<JudgeDecision> {
        let start = Instant::now();
        let deadline = start + self.timeout;
        let ids: Vec<u64> = requests.iter().map(|r| r.trajectory.id).collect();
        {
            let mut g = self.state.lock();
            for r in requests {
                g.pending.insert(r.trajectory.id, PendingJudgment::from_request(r));
            }
        }
        let mut got: BTreeMap<u64, bool> = BTreeMap::new();
        let mut latency: BTreeMap<u64, f64> = BTreeMap::new();
        let mut take = |v: Verdict, got: &mut BTreeMap<u64, bool>| {
            if ids.contains(&v.trajectory_id) {
                got.insert(v.trajectory_id, v.accept);
                latency.insert(v.trajectory_id, start.elapsed().as_secs_f64());
            }
        };
        while got.len() < ids.len() {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            match self.verdicts.recv_timeout(deadline - now) {
                Ok(v) => take(v, &mut got),
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        let mut timed_out = Vec::new();
        {
            // Under the lock no new verdict can be sent, so anything the API
            // accepted is already in the channel.
            let mut g = self.state.lock();
            for &id in &ids {
                if !got.contains_key(&id) && g.pending.remove(&id).is_some() {
                    g.decided.insert(id);
                    timed_out.push(id);
                }
            }
            while let Ok(v) = self.verdicts.try_recv() {
                take(v, &mut got);
            }
        }
        if !timed_out.is_empty() {
            log::warn!("no judgment for trajectories {timed_out:?} within {:?}; rejecting", self.timeout);
        }
        requests
            .iter()
            .map(|r| {
                let id = r.trajectory.id;
                JudgeDecision {
                    trajectory_id: id,
                    agent: r.trajectory.agent,
                    accept: got.get(&id).copied().unwrap_or(false),
                    source: JudgeSource::Human,
                    latency: latency.get(&id).copied().unwrap_or(self.timeout.as_secs_f64()),
                    timed_out: !got.contains_key(&id),
                }
            })
            .collect()
    }
}

/// Wraps a judge and remembers its latest decisions.
pub struct RecordingJudge<'a> {
    pub inner: &'a mut dyn Judge,
    pub last: Vec<JudgeDecision>,
}

impl Judge for RecordingJudge<'_> {
    fn judge_episode(&mut self, requests: &[JudgeRequest<'_>]) -> Vec<JudgeDecision> {
        self.last = self.inner.judge_episode(requests);
        self.last.clone()
    }
}
