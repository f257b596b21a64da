//! Episode records, demonstration sets and the self-imitation pool.

use crate::world::{
    eval_reward_follower, eval_reward_leader, ActionId, FollowerObs, LeaderObs, TermReason,
    MAX_HEADING_DEVIATION, MAX_RANGE, TARGET_SPACING,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Leader,
    Follower,
}

impl AgentKind {
    pub const BOTH: [AgentKind; 2] = [AgentKind::Leader, AgentKind::Follower];

    pub fn index(self) -> usize {
        match self {
            AgentKind::Leader => 0,
            AgentKind::Follower => 1,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            AgentKind::Leader => LeaderObs::DIM,
            AgentKind::Follower => FollowerObs::DIM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Leader => "leader",
            AgentKind::Follower => "follower",
        }
    }

    /// Per-step evaluation reward computed from a raw observation vector.
    pub fn eval_reward(self, obs: &[f64]) -> f64 {
        match self {
            AgentKind::Leader => {
                let d_l = obs.iter().copied().fold(f64::INFINITY, f64::min);
                eval_reward_leader(d_l)
            }
            AgentKind::Follower => {
                let d_f = obs[2..].iter().copied().fold(f64::INFINITY, f64::min);
                eval_reward_follower(obs[0], obs[1], d_f)
            }
        }
    }

    /// Fixed affine map of a raw observation into roughly [-1, 1] for the networks.
    pub fn scale_obs(self, obs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let sonar = |d: f64| 2.0 * d / MAX_RANGE - 1.0;
        match self {
            AgentKind::Leader => out.extend(obs.iter().map(|&d| sonar(d))),
            AgentKind::Follower => {
                out.push((obs[0] - TARGET_SPACING) / 15.0);
                out.push(obs[1] / MAX_HEADING_DEVIATION);
                out.extend(obs[2..].iter().map(|&d| sonar(d)));
            }
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub obs: Vec<f64>,
    pub action: ActionId,
    pub log_prob: f64,
    pub value: f64,
    /// Discriminator reward, filled in after the discriminator update.
    pub disc_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub agent: AgentKind,
    pub episode: u64,
    pub steps: Vec<TrajectoryStep>,
    pub term_reason: TermReason,
    /// Critic value of the state after the last step (used on truncation).
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn eval_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| self.agent.eval_reward(&s.obs)).collect()
    }

    pub fn mean_eval_reward(&self) -> f64 {
        mean(&self.eval_rewards())
    }

    pub fn mean_disc_reward(&self) -> f64 {
        mean(&self.steps.iter().map(|s| s.disc_reward).collect::<Vec<_>>())
    }

    pub fn to_demo_episode(&self) -> DemoEpisode {
        DemoEpisode {
            obs: self.steps.iter().map(|s| s.obs.clone()).collect(),
            actions: self.steps.iter().map(|s| s.action).collect(),
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExpertOptimal,
    ExpertSuboptimal,
    SelfGenerated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ExpertOptimal => "expert-optimal",
            Provenance::ExpertSuboptimal => "expert-suboptimal",
            Provenance::SelfGenerated => "self-generated",
        }
    }

    pub fn is_expert(self) -> bool {
        self != Provenance::SelfGenerated
    }
}

/// One demonstrated episode: observations and the actions taken on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEpisode {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActionId>,
}

impl DemoEpisode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemoSetError {
    #[error("demonstration set is empty")]
    Empty,
    #[error("episode {episode} step {step}: observation has {got} values, {agent} expects {expected}")]
    Dimension { episode: usize, step: usize, agent: AgentKind, expected: usize, got: usize },
    #[error("episode {0}: observation and action counts differ")]
    Ragged(usize),
}

/// Demonstrations for one agent. Episodes are shared so a set can be swapped
/// out cheaply and compared by identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    agent: AgentKind,
    provenance: Provenance,
    episodes: Arc<Vec<DemoEpisode>>,
    // prefix sums of episode lengths, for flat indexing
    offsets: Vec<usize>,
    mean_eval_reward: f64,
}

impl DemoSet {
    pub fn new(
        agent: AgentKind,
        provenance: Provenance,
        episodes: Vec<DemoEpisode>,
    ) -> Result<Self, DemoSetError> {
        let dim = agent.obs_dim();
        let mut offsets = vec![0];
        let mut reward_sum = 0.0;
        for (e, ep) in episodes.iter().enumerate() {
            if ep.obs.len() != ep.actions.len() {
                return Err(DemoSetError::Ragged(e));
            }
            for (s, o) in ep.obs.iter().enumerate() {
                if o.len() != dim {
                    return Err(DemoSetError::Dimension { episode: e, step: s, agent, expected: dim, got: o.len() });
                }
                reward_sum += agent.eval_reward(o);
            }
            offsets.push(offsets[e] + ep.len());
        }
        let total = *offsets.last().unwrap();
        if total == 0 {
            return Err(DemoSetError::Empty);
        }
        Ok(Self {
            agent,
            provenance,
            episodes: Arc::new(episodes),
            offsets,
            mean_eval_reward: reward_sum / total as f64,
        })
    }

    pub fn agent(&self) -> AgentKind {
        self.agent
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn episodes(&self) -> &[DemoEpisode] {
        &self.episodes
    }

    pub fn total_pairs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Mean per-step evaluation reward over every demonstrated pair.
    pub fn mean_eval_reward(&self) -> f64 {
        self.mean_eval_reward
    }

    /// Pair `i` in episode-major order.
    pub fn pair(&self, i: usize) -> (&[f64], ActionId) {
        let e = self.offsets.partition_point(|&o| o <= i) - 1;
        let s = i - self.offsets[e];
        let ep = &self.episodes[e];
        (&ep.obs[s], ep.actions[s])
    }

    /// True when both sets share the same underlying episode storage.
    pub fn same_storage(&self, other: &DemoSet) -> bool {
        Arc::ptr_eq(&self.episodes, &other.episodes)
    }

    pub fn summary(&self) -> DemoSummary {
        DemoSummary {
            provenance: self.provenance,
            episodes: self.episodes.len(),
            pairs: self.total_pairs(),
            mean_eval_reward: self.mean_eval_reward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub provenance: Provenance,
    pub episodes: usize,
    pub pairs: usize,
    pub mean_eval_reward: f64,
}

/// Judge-approved trajectories waiting to replace the demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPool {
    agent: AgentKind,
    capacity: usize,
    episodes: Vec<DemoEpisode>,
    total_pairs: usize,
}

impl TrajectoryPool {
    pub fn new(agent: AgentKind, capacity: usize) -> Self {
        Self { agent, capacity, episodes: Vec::new(), total_pairs: 0 }
    }

    pub fn agent(&self) -> AgentKind {
        self.agent
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_pairs(&self) -> usize {
        self.total_pairs
    }

    pub fn episodes(&self) -> &[DemoEpisode] {
        &self.episodes
    }

    pub fn push(&mut self, episode: DemoEpisode) {
        self.total_pairs += episode.len();
        self.episodes.push(episode);
    }

    pub fn is_full(&self) -> bool {
        self.total_pairs >= self.capacity
    }

    /// Empties the pool, returning its episodes.
    pub fn drain(&mut self) -> Vec<DemoEpisode> {
        self.total_pairs = 0;
        std::mem::take(&mut self.episodes)
    }

    pub(crate) fn restore(agent: AgentKind, capacity: usize, episodes: Vec<DemoEpisode>) -> Self {
        let total_pairs = episodes.iter().map(DemoEpisode::len).sum();
        Self { agent, capacity, episodes, total_pairs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(len: usize, d: f64) -> DemoEpisode {
        DemoEpisode { obs: vec![vec![d; 6]; len], actions: vec![ActionId::STRAIGHT; len] }
    }

    #[test]
    fn demo_set_indexing_crosses_episodes() {
        let set = DemoSet::new(
            AgentKind::Leader,
            Provenance::ExpertOptimal,
            vec![episode(2, 10.0), episode(3, 20.0)],
        )
        .unwrap();
        assert_eq!(set.total_pairs(), 5);
        assert_eq!(set.pair(1).0[0], 10.0);
        assert_eq!(set.pair(2).0[0], 20.0);
        assert_eq!(set.pair(4).0[0], 20.0);
    }

    #[test]
    fn demo_set_mean_reward() {
        let set = DemoSet::new(AgentKind::Leader, Provenance::ExpertOptimal, vec![episode(4, 17.3)]).unwrap();
        assert!((set.mean_eval_reward() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn demo_set_rejects_bad_input() {
        assert_eq!(
            DemoSet::new(AgentKind::Leader, Provenance::ExpertOptimal, vec![]),
            Err(DemoSetError::Empty)
        );
        let err = DemoSet::new(AgentKind::Follower, Provenance::ExpertOptimal, vec![episode(1, 1.0)]);
        assert!(matches!(err, Err(DemoSetError::Dimension { expected: 8, got: 6, .. })));
    }

    #[test]
    fn follower_scaling_is_centered_at_target() {
        let mut out = Vec::new();
        AgentKind::Follower.scale_obs(&[18.0, 0.0, 16.5, 33.0, 33.0, 33.0, 33.0, 16.5], &mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 0.0);
        assert_eq!(out[3], 1.0);
    }
}
