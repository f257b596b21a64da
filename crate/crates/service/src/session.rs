//! The training loop: episodes, metrics, checkpoints, judging.

use crate::config::{JudgeKind, SessionConfig};
use crate::judge::{HumanJudge, RecordingJudge};
use crate::metrics::{MetricsRecord, PathRecord, RunLog};
use crate::state::{AgentStatus, Event, Phase, SharedState};
use magaisil_core::algo::{
    run_episode, AgentKind, AgentLearner, AlgoError, Judge, OracleJudge, Provenance,
    TrainingCheckpoint,
};
use magaisil_core::demos::{load_demo_set, DemoError};
use magaisil_core::world::{Task, WorldError};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Task(#[from] WorldError),
    #[error(transparent)]
    Demos(#[from] DemoError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training fault in episode {episode}: {reason}")]
    TrainingFault { episode: u64, reason: String },
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error("could not start the API server: {0}")]
    Serve(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub replacements: u64,
    pub accepted: u64,
    pub demo_provenance: Provenance,
    /// Mean per-step evaluation reward over the last (up to) 50 episodes.
    pub final_mean_eval_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub episodes_run: u64,
    pub resumed_from: u64,
    pub success_rate_last_50: f64,
    pub agents: Vec<AgentSummary>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Builds learners from the config's demo files.
pub fn fresh_learners(config: &SessionConfig) -> Result<[AgentLearner; 2], SessionError> {
    let path = |p: &Option<PathBuf>, name: &str| {
        p.clone().ok_or_else(|| SessionError::Config(format!("{name} is required")))
    };
    let leader_demos = load_demo_set(&path(&config.demos_leader, "demos_leader")?, AgentKind::Leader)?;
    let follower_demos = load_demo_set(&path(&config.demos_follower, "demos_follower")?, AgentKind::Follower)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.train.seed);
    Ok([
        AgentLearner::new(leader_demos, &config.train, &mut rng)?,
        AgentLearner::new(follower_demos, &config.train, &mut rng)?,
    ])
}

fn agent_status(learners: &[AgentLearner; 2], replacements: [u64; 2]) -> Vec<AgentStatus> {
    learners
        .iter()
        .zip(replacements)
        .map(|(l, replacements)| AgentStatus {
            agent: l.agent,
            pool_pairs: l.pool.total_pairs(),
            pool_capacity: l.pool.capacity(),
            demo_provenance: l.demos.provenance(),
            demo_mean_eval_reward: l.demos.mean_eval_reward(),
            replacements,
        })
        .collect()
}

/// Runs the configured number of episodes, resuming from a checkpoint in
/// `out_dir` when asked. `state` receives live status for the API.
pub fn run_session(config: &SessionConfig, state: &SharedState) -> Result<SessionSummary, SessionError> {
    let result = run_inner(config, state);
    let mut g = state.lock();
    match &result {
        Ok(_) => g.status.phase = Phase::Finished,
        Err(e) => {
            g.status.phase = Phase::Failed;
            g.status.error = Some(e.to_string());
        }
    }
    result
}

fn run_inner(config: &SessionConfig, state: &SharedState) -> Result<SessionSummary, SessionError> {
    config.validate().map_err(SessionError::Config)?;
    let task = Task::resolve(&config.task)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let ck_path = out.join(CHECKPOINT_FILE);

    let (mut learners, start) = if config.resume && ck_path.exists() {
        let ck = TrainingCheckpoint::load(&ck_path).map_err(|e| SessionError::Checkpoint(e.to_string()))?;
        if ck.mode != config.mode || ck.task_id != task.id || ck.config != config.train {
            return Err(SessionError::Checkpoint(format!(
                "{} was written by a different run (mode {:?}, task {})",
                ck_path.display(),
                ck.mode,
                ck.task_id
            )));
        }
        (ck.restore_learners()?, ck.next_episode)
    } else {
        (fresh_learners(config)?, 0)
    };
    if start > 0 {
        log::info!("resuming at episode {start}");
    }

    let (mut log, kept) = RunLog::open(out, start).map_err(io_err(out))?;
    let mut replacements = [0u64; 2];
    let mut accepted = [0u64; 2];
    for r in &kept {
        replacements[r.agent.index()] += r.replaced as u64;
        accepted[r.agent.index()] += r.accepted as u64;
    }
    let mut recent: Vec<MetricsRecord> = kept;
    {
        let mut g = state.lock();
        g.metrics = recent.clone();
        g.status.phase = Phase::Running;
        g.status.episodes_done = start;
        g.status.agents = agent_status(&learners, replacements);
    }

    let mut oracle = OracleJudge { require_goal: config.oracle_require_goal };
    let mut human = match config.judge {
        JudgeKind::Human => {
            Some(HumanJudge::new(state.clone(), Duration::from_secs_f64(config.judgment_timeout_secs)))
        }
        JudgeKind::Oracle => None,
    };

    for episode in start..config.episodes {
        let inner: &mut dyn Judge = match human.as_mut() {
            Some(h) => h,
            None => &mut oracle,
        };
        let mut judge = RecordingJudge { inner, last: Vec::new() };
        let report = run_episode(&mut learners, &task, &mut judge, config.mode, &config.train, episode)?;
        let records: Vec<MetricsRecord> = report
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let timed_out = judge.last.get(i).map(|d| d.timed_out).unwrap_or(false);
                MetricsRecord::new(&report, a, timed_out)
            })
            .collect();
        let path = PathRecord {
            episode,
            term_reason: report.term_reason.as_str().to_string(),
            leader: report.rollout.path.iter().map(|(l, _)| [l.x, l.y]).collect(),
            follower: report.rollout.path.iter().map(|(_, f)| [f.x, f.y]).collect(),
        };
        log.append(&records, &path).map_err(io_err(&log.metrics_path.clone()))?;
        for r in &records {
            replacements[r.agent.index()] += r.replaced as u64;
            accepted[r.agent.index()] += r.accepted as u64;
        }
        {
            let mut g = state.lock();
            g.metrics.extend(records.iter().cloned());
            g.status.episodes_done = episode + 1;
            g.status.agents = agent_status(&learners, replacements);
        }
        for r in &records {
            state.publish(Event::Episode(r.clone()));
            if r.replaced {
                log::info!("episode {episode}: {} demonstrations replaced by self-generated pool", r.agent);
                state.publish(Event::Replacement(r.clone()));
            }
        }
        if episode % 25 == 0 || episode + 1 == config.episodes {
            log::info!(
                "episode {episode}: {} steps, {}, leader r {:.3}, follower r {:.3}",
                report.agents[0].steps,
                report.term_reason.as_str(),
                report.agents[0].mean_eval_reward,
                report.agents[1].mean_eval_reward
            );
        }
        recent.extend(records.iter().cloned());
        if let Some(fault) = records.iter().find_map(|r| r.fault.clone()) {
            return Err(SessionError::TrainingFault { episode, reason: fault });
        }
        let next = episode + 1;
        if next % config.checkpoint_interval == 0 || next == config.episodes {
            TrainingCheckpoint::capture(&learners, next, config.mode, &task.id, &config.train)
                .save(&ck_path)
                .map_err(io_err(&ck_path))?;
        }
    }

    let last_n = |agent: AgentKind| {
        let xs: Vec<f64> =
            recent.iter().rev().filter(|r| r.agent == agent).take(50).map(|r| r.mean_eval_reward).collect();
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let leader_recent: Vec<&MetricsRecord> =
        recent.iter().rev().filter(|r| r.agent == AgentKind::Leader).take(50).collect();
    let success_rate_last_50 = if leader_recent.is_empty() {
        0.0
    } else {
        leader_recent.iter().filter(|r| r.success).count() as f64 / leader_recent.len() as f64
    };
    Ok(SessionSummary {
        episodes_run: config.episodes.saturating_sub(start),
        resumed_from: start,
        success_rate_last_50,
        agents: AgentKind::BOTH
            .iter()
            .map(|&agent| AgentSummary {
                agent,
                replacements: replacements[agent.index()],
                accepted: accepted[agent.index()],
                demo_provenance: learners[agent.index()].demos.provenance(),
                final_mean_eval_reward: last_n(agent),
            })
            .collect(),
        metrics_path: log.metrics_path.clone(),
        checkpoint_path: ck_path,
    })
}
