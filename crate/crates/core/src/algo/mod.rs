//! Learning stack: independent PPO actor-critics rewarded by per-agent
//! discriminators, plus the judge-driven self-imitation pool.

mod checkpoint;
mod config;
mod episode;
mod gae;
mod judge;
mod learner;
mod trajectory;

pub use checkpoint::{LearnerCheckpoint, TrainingCheckpoint};
pub use config::TrainConfig;
pub use episode::{
    episode_rng, greedy_rollout, rollout, run_episode, trajectory_id, AgentEpisodeReport,
    EpisodeReport, EpisodeRng, Mode, Pilot, PolicyPilot, Rollout,
};
pub use gae::{compute_gae, normalize};
pub use judge::{
    pool_insert_and_maybe_replace, Judge, JudgeDecision, JudgeRequest, JudgeSource, OracleJudge,
    PoolOutcome,
};
pub use learner::{
    clamp_probability, gail_reward, sample_indices, ActionSample, AgentLearner, PpoBatch,
    PpoStats, D_CLAMP,
};
pub use trajectory::{
    AgentKind, DemoEpisode, DemoSet, DemoSetError, DemoSummary, Provenance, Trajectory,
    TrajectoryPool, TrajectoryStep,
};

use crate::nn::NnError;
use crate::world::WorldError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlgoError {
    #[error("{agent} observation has {got} values, expected {expected}")]
    ObservationDim { agent: AgentKind, expected: usize, got: usize },
    #[error("no agent state-action pairs to learn from")]
    EmptyAgentSample,
    #[error("demonstration set is empty")]
    EmptyDemoSet,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("world: {0}")]
    World(String),
    #[error("judge: {0}")]
    Judge(String),
}


impl From<WorldError> for AlgoError {
    fn from(e: WorldError) -> Self {
        AlgoError::World(e.to_string())
    }
}
