//! Greedy evaluation of trained (or scripted) pilots.

use crate::algo::{episode_rng, greedy_rollout, rollout, AgentKind, AgentLearner, AlgoError, Rollout};
use crate::demos::{Quality, ScriptedController};
use crate::par::Execution;
use crate::world::{Pose, Task, TermReason};
use serde::{Deserialize, Serialize};

/// Per-step quantities for plotting distance and heading traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStep {
    pub step: usize,
    pub leader: Pose,
    pub follower: Pose,
    /// Nearest sonar return of each vehicle.
    pub d_l: f64,
    pub d_f: f64,
    pub g_f: f64,
    pub a_f: f64,
    pub r_l: f64,
    pub r_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: u64,
    pub success: bool,
    pub term_reason: TermReason,
    pub steps: usize,
    pub progress: f64,
    pub mean_leader_reward: f64,
    pub mean_follower_reward: f64,
    pub mean_abs_heading_deviation: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<EvalStep>,
}

impl EvalEpisode {
    pub fn from_rollout(episode: u64, r: &Rollout, keep_series: bool) -> Self {
        let [lt, ft] = &r.trajectories;
        let series: Vec<EvalStep> = lt
            .steps
            .iter()
            .zip(&ft.steps)
            .enumerate()
            .map(|(i, (ls, fs))| {
                let (leader, follower) = r.path[i];
                let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
                EvalStep {
                    step: i,
                    leader,
                    follower,
                    d_l: min(&ls.obs),
                    d_f: min(&fs.obs[2..]),
                    g_f: fs.obs[0],
                    a_f: fs.obs[1],
                    r_l: AgentKind::Leader.eval_reward(&ls.obs),
                    r_f: AgentKind::Follower.eval_reward(&fs.obs),
                }
            })
            .collect();
        let n = series.len().max(1) as f64;
        Self {
            episode,
            success: r.success(),
            term_reason: r.term_reason,
            steps: series.len(),
            progress: r.progress,
            mean_leader_reward: series.iter().map(|s| s.r_l).sum::<f64>() / n,
            mean_follower_reward: series.iter().map(|s| s.r_f).sum::<f64>() / n,
            mean_abs_heading_deviation: series.iter().map(|s| s.a_f.abs()).sum::<f64>() / n,
            series: if keep_series { series } else { Vec::new() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_leader_reward: f64,
    pub mean_follower_reward: f64,
    pub episodes: Vec<EvalEpisode>,
}

impl EvalReport {
    fn from_episodes(task: &Task, seed: u64, episodes: Vec<EvalEpisode>) -> Self {
        let n = episodes.len().max(1) as f64;
        Self {
            task_id: task.id.clone(),
            seed,
            success_rate: episodes.iter().filter(|e| e.success).count() as f64 / n,
            mean_leader_reward: episodes.iter().map(|e| e.mean_leader_reward).sum::<f64>() / n,
            mean_follower_reward: episodes.iter().map(|e| e.mean_follower_reward).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Greedy (argmax) rollouts of both learners, one per episode index.
pub fn evaluate_learners(
    learners: &[AgentLearner; 2],
    task: &Task,
    episodes: usize,
    seed: u64,
    keep_series: bool,
    exec: Execution,
) -> Result<EvalReport, AlgoError> {
    let results = exec.map_range(episodes, |e| {
        let r = greedy_rollout(learners, task, seed, e as u64)?;
        Ok(EvalEpisode::from_rollout(e as u64, &r, keep_series))
    });
    Ok(EvalReport::from_episodes(task, seed, results.into_iter().collect::<Result<_, AlgoError>>()?))
}

/// Same protocol for the scripted demonstrators.
pub fn evaluate_scripted(
    quality: Quality,
    task: &Task,
    episodes: usize,
    seed: u64,
    keep_series: bool,
    exec: Execution,
) -> Result<EvalReport, AlgoError> {
    let results = exec.map_range(episodes, |e| {
        let e = e as u64;
        let mut l = ScriptedController::for_episode(AgentKind::Leader, quality, seed, e);
        let mut f = ScriptedController::for_episode(AgentKind::Follower, quality, seed, e);
        let r = rollout(task, &mut l, &mut f, e, &mut episode_rng(seed, e))?;
        Ok(EvalEpisode::from_rollout(e, &r, keep_series))
    });
    Ok(EvalReport::from_episodes(task, seed, results.into_iter().collect::<Result<_, AlgoError>>()?))
}
