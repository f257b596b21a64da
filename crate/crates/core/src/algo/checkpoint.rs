//! Whole-run checkpoints: networks, optimizer moments, demonstrations and
//! pool for both agents, plus the episode counter.

use super::config::TrainConfig;
use super::episode::Mode;
use super::learner::AgentLearner;
use super::trajectory::{AgentKind, DemoEpisode, DemoSet, Provenance, TrajectoryPool};
use super::AlgoError;
use crate::nn::{NetCheckpoint, NnError, CHECKPOINT_VERSION};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerCheckpoint {
    pub agent: AgentKind,
    pub policy: NetCheckpoint,
    pub value: NetCheckpoint,
    pub discriminator: NetCheckpoint,
    pub demo_provenance: Provenance,
    pub demos: Vec<DemoEpisode>,
    pub pool_capacity: usize,
    pub pool: Vec<DemoEpisode>,
}

impl LearnerCheckpoint {
    pub fn capture(l: &AgentLearner) -> Self {
        Self {
            agent: l.agent,
            policy: NetCheckpoint::capture(&l.policy, Some(&l.policy_opt)),
            value: NetCheckpoint::capture(&l.value, Some(&l.value_opt)),
            discriminator: NetCheckpoint::capture(&l.discriminator, Some(&l.disc_opt)),
            demo_provenance: l.demos.provenance(),
            demos: l.demos.episodes().to_vec(),
            pool_capacity: l.pool.capacity(),
            pool: l.pool.episodes().to_vec(),
        }
    }

    pub fn restore(self) -> Result<AgentLearner, AlgoError> {
        let bad = |what: &str| AlgoError::Nn(NnError::Checkpoint(format!("{what} checkpoint has no optimizer state")));
        let (policy, policy_opt) = self.policy.restore()?;
        let (value, value_opt) = self.value.restore()?;
        let (discriminator, disc_opt) = self.discriminator.restore()?;
        let dim = self.agent.obs_dim();
        let expect = [
            ("policy", &policy, dim),
            ("value", &value, dim),
            ("discriminator", &discriminator, dim + crate::world::ActionId::COUNT),
        ];
        for (name, net, inputs) in expect {
            if net.input_dim() != inputs {
                return Err(AlgoError::Nn(NnError::Checkpoint(format!(
                    "{name} network takes {} inputs, {} needs {inputs}",
                    net.input_dim(),
                    self.agent
                ))));
            }
        }
        let demos = DemoSet::new(self.agent, self.demo_provenance, self.demos)
            .map_err(|e| AlgoError::Nn(NnError::Checkpoint(e.to_string())))?;
        Ok(AgentLearner {
            agent: self.agent,
            policy,
            value,
            discriminator,
            policy_opt: policy_opt.ok_or_else(|| bad("policy"))?,
            value_opt: value_opt.ok_or_else(|| bad("value"))?,
            disc_opt: disc_opt.ok_or_else(|| bad("discriminator"))?,
            demos,
            pool: TrajectoryPool::restore(self.agent, self.pool_capacity, self.pool),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCheckpoint {
    pub version: u32,
    /// Index of the next episode to run.
    pub next_episode: u64,
    pub mode: Mode,
    pub task_id: String,
    pub config: TrainConfig,
    /// Leader first.
    pub learners: Vec<LearnerCheckpoint>,
}

impl TrainingCheckpoint {
    pub fn capture(
        learners: &[AgentLearner; 2],
        next_episode: u64,
        mode: Mode,
        task_id: &str,
        config: &TrainConfig,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            next_episode,
            mode,
            task_id: task_id.to_string(),
            config: config.clone(),
            learners: learners.iter().map(LearnerCheckpoint::capture).collect(),
        }
    }

    pub fn restore_learners(&self) -> Result<[AgentLearner; 2], AlgoError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(AlgoError::Nn(NnError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            ))));
        }
        let [l, f]: [LearnerCheckpoint; 2] = self
            .learners
            .clone()
            .try_into()
            .map_err(|_| AlgoError::Nn(NnError::Checkpoint("expected two learners".into())))?;
        if l.agent != AgentKind::Leader || f.agent != AgentKind::Follower {
            return Err(AlgoError::Nn(NnError::Checkpoint("learners out of order".into())));
        }
        Ok([l.restore()?, f.restore()?])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AlgoError> {
        serde_json::from_str(text).map_err(|e| AlgoError::Nn(NnError::Checkpoint(e.to_string())))
    }

    /// Writes atomically (temp file, then rename).
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(tmp, path)
    }

    pub fn load(path: &Path) -> Result<Self, AlgoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AlgoError::Nn(NnError::Checkpoint(format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }
}
