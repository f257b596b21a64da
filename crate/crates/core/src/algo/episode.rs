//! Episode rollouts and the per-episode learning schedule.

use super::config::TrainConfig;
use super::judge::{pool_insert_and_maybe_replace, Judge, JudgeRequest, PoolOutcome};
use super::learner::{ActionSample, AgentLearner, PpoStats};
use super::trajectory::{AgentKind, Provenance, Trajectory, TrajectoryStep};
use super::AlgoError;
use crate::world::{self, Pose, Task, TermReason, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type EpisodeRng = ChaCha8Rng;

/// Independent random stream for `(seed, episode)`. Episodes never share
/// RNG state, so a run resumed from a checkpoint replays identically.
pub fn episode_rng(seed: u64, episode: u64) -> EpisodeRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Magail,
    Magaisil,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "magail" => Ok(Mode::Magail),
            "magaisil" => Ok(Mode::Magaisil),
            other => Err(format!("unknown mode {other:?} (expected magail or magaisil)")),
        }
    }
}

/// Something that picks an action for one vehicle each tick.
pub trait Pilot {
    fn act(&mut self, obs: &[f64], rng: &mut EpisodeRng) -> Result<ActionSample, AlgoError>;

    /// Value estimate used to bootstrap a cut-off episode.
    fn bootstrap_value(&self, _obs: &[f64]) -> Result<f64, AlgoError> {
        Ok(0.0)
    }
}

/// A learner's policy, either sampled or greedy.
pub struct PolicyPilot<'a> {
    pub learner: &'a AgentLearner,
    pub greedy: bool,
}

impl Pilot for PolicyPilot<'_> {
    fn act(&mut self, obs: &[f64], rng: &mut EpisodeRng) -> Result<ActionSample, AlgoError> {
        if self.greedy {
            let action = self.learner.greedy_action(obs)?;
            let log_prob = self.learner.action_probs(obs)?[action.index()].ln();
            Ok(ActionSample { action, log_prob, value: 0.0 })
        } else {
            self.learner.select_action(obs, rng)
        }
    }

    fn bootstrap_value(&self, obs: &[f64]) -> Result<f64, AlgoError> {
        self.learner.state_value(obs)
    }
}

/// A finished episode for both vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Leader first.
    pub trajectories: [Trajectory; 2],
    /// Poses before the first step and after every step.
    pub path: Vec<(Pose, Pose)>,
    pub term_reason: TermReason,
    pub progress: f64,
}

impl Rollout {
    pub fn success(&self) -> bool {
        self.term_reason == TermReason::GoalReached
    }
}

/// Trajectory ids are `2 * episode + agent index`.
pub fn trajectory_id(episode: u64, agent: AgentKind) -> u64 {
    2 * episode + agent.index() as u64
}

/// Runs one episode from the (jittered) task start until termination.
pub fn rollout(
    task: &Task,
    leader: &mut dyn Pilot,
    follower: &mut dyn Pilot,
    episode: u64,
    rng: &mut EpisodeRng,
) -> Result<Rollout, AlgoError> {
    let mut state = WorldState::start_jittered(task, rng);
    let mut obs = state.observe(task);
    let mut path = vec![(state.leader, state.follower)];
    let mut leader_steps = Vec::new();
    let mut follower_steps = Vec::new();
    loop {
        let lo = obs.leader_obs.to_vec();
        let fo = obs.follower_obs.to_vec();
        let la = leader.act(&lo, rng)?;
        let fa = follower.act(&fo, rng)?;
        let record = |obs: Vec<f64>, a: ActionSample| TrajectoryStep {
            obs,
            action: a.action,
            log_prob: a.log_prob,
            value: a.value,
            disc_reward: 0.0,
        };
        leader_steps.push(record(lo, la));
        follower_steps.push(record(fo, fa));
        obs = world::step(task, &mut state, la.action, fa.action)?;
        path.push((state.leader, state.follower));
        if obs.done {
            break;
        }
    }
    let term_reason = obs.term_reason;
    let (leader_boot, follower_boot) = if term_reason.is_truncation() {
        (
            leader.bootstrap_value(&obs.leader_obs.to_vec())?,
            follower.bootstrap_value(&obs.follower_obs.to_vec())?,
        )
    } else {
        (0.0, 0.0)
    };
    let make = |agent: AgentKind, steps: Vec<TrajectoryStep>, bootstrap_value: f64| Trajectory {
        id: trajectory_id(episode, agent),
        agent,
        episode,
        steps,
        term_reason,
        bootstrap_value,
    };
    Ok(Rollout {
        trajectories: [
            make(AgentKind::Leader, leader_steps, leader_boot),
            make(AgentKind::Follower, follower_steps, follower_boot),
        ],
        path,
        term_reason,
        progress: obs.progress,
    })
}

/// One agent's view of a training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEpisodeReport {
    pub agent: AgentKind,
    pub steps: usize,
    pub term_reason: TermReason,
    pub mean_disc_reward: f64,
    pub mean_eval_reward: f64,
    pub success: bool,
    pub judged: bool,
    pub accepted: bool,
    pub replaced: bool,
    /// Pool fill after this episode's pool logic.
    pub pool_pairs: usize,
    /// Provenance of the demonstrations after this episode.
    pub demo_provenance: Provenance,
    pub demo_mean_eval_reward: f64,
    pub disc_loss: f64,
    pub ppo: PpoStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub episode: u64,
    pub agents: [AgentEpisodeReport; 2],
    pub term_reason: TermReason,
    pub progress: f64,
    pub rollout: Rollout,
}

/// Rolls out one episode with both policies, trains each agent (discriminator
/// rounds, then PPO on the discriminator rewards) and, in self-imitation mode,
/// routes both trajectories through the judge and the pool.
pub fn run_episode(
    learners: &mut [AgentLearner; 2],
    task: &Task,
    judge: &mut dyn Judge,
    mode: Mode,
    config: &TrainConfig,
    episode: u64,
) -> Result<EpisodeReport, AlgoError> {
    let mut rng = episode_rng(config.seed, episode);
    let mut rollout = {
        let [l, f] = &*learners;
        let mut lp = PolicyPilot { learner: l, greedy: false };
        let mut fp = PolicyPilot { learner: f, greedy: false };
        rollout(task, &mut lp, &mut fp, episode, &mut rng)?
    };

    let mut learn_results = Vec::with_capacity(2);
    for (learner, traj) in learners.iter_mut().zip(rollout.trajectories.iter_mut()) {
        match learner.learn_from(traj, config, &mut rng) {
            Ok((loss, stats)) => learn_results.push((loss, stats, None)),
            Err(e @ (AlgoError::NonFinite(_) | AlgoError::Nn(_))) => {
                learn_results.push((f64::NAN, PpoStats::default(), Some(e.to_string())))
            }
            Err(e) => return Err(e),
        }
    }

    let mut outcomes = [None, None];
    if mode == Mode::Magaisil {
        let decisions = {
            let requests: Vec<JudgeRequest<'_>> = rollout
                .trajectories
                .iter()
                .zip(learners.iter())
                .map(|(t, l)| JudgeRequest { trajectory: t, demos: l.demos.summary(), path: &rollout.path })
                .collect();
            judge.judge_episode(&requests)
        };
        if decisions.len() != 2 {
            return Err(AlgoError::Judge(format!("expected 2 decisions, got {}", decisions.len())));
        }
        for (i, decision) in decisions.iter().enumerate() {
            if decision.trajectory_id != rollout.trajectories[i].id {
                return Err(AlgoError::Judge("decision for an unknown trajectory".into()));
            }
            outcomes[i] =
                Some(pool_insert_and_maybe_replace(&mut learners[i], &rollout.trajectories[i], decision));
        }
    }

    let agents: Vec<AgentEpisodeReport> = (0..2)
        .map(|i| {
            let traj = &rollout.trajectories[i];
            let learner = &learners[i];
            let (disc_loss, ppo, fault) = learn_results[i].clone();
            AgentEpisodeReport {
                agent: traj.agent,
                steps: traj.len(),
                term_reason: traj.term_reason,
                mean_disc_reward: traj.mean_disc_reward(),
                mean_eval_reward: traj.mean_eval_reward(),
                success: rollout.success(),
                judged: outcomes[i].is_some(),
                accepted: matches!(outcomes[i], Some(PoolOutcome::Pooled | PoolOutcome::Replaced)),
                replaced: outcomes[i] == Some(PoolOutcome::Replaced),
                pool_pairs: learner.pool.total_pairs(),
                demo_provenance: learner.demos.provenance(),
                demo_mean_eval_reward: learner.demos.mean_eval_reward(),
                disc_loss,
                ppo,
                fault,
            }
        })
        .collect();
    let agents: [AgentEpisodeReport; 2] = agents.try_into().expect("two agents");

    Ok(EpisodeReport {
        episode,
        agents,
        term_reason: rollout.term_reason,
        progress: rollout.progress,
        rollout,
    })
}

/// Greedy rollout of the current policies, no learning.
pub fn greedy_rollout(
    learners: &[AgentLearner; 2],
    task: &Task,
    seed: u64,
    episode: u64,
) -> Result<Rollout, AlgoError> {
    let mut rng = episode_rng(seed, episode);
    let mut lp = PolicyPilot { learner: &learners[0], greedy: true };
    let mut fp = PolicyPilot { learner: &learners[1], greedy: true };
    rollout(task, &mut lp, &mut fp, episode, &mut rng)
}
