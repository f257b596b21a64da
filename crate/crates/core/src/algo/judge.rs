//! Judges decide whether a finished episode should enter the self-imitation
//! pool, and the pool decides when to replace the demonstrations.

use super::learner::AgentLearner;
use super::trajectory::{AgentKind, DemoSet, DemoSummary, Provenance, Trajectory};
use crate::world::Pose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeSource {
    Oracle,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeDecision {
    pub trajectory_id: u64,
    pub agent: AgentKind,
    pub accept: bool,
    pub source: JudgeSource,
    /// Seconds between submission and verdict; zero for the oracle.
    pub latency: f64,
    /// Set when no verdict arrived in time and the trajectory was rejected.
    #[serde(default)]
    pub timed_out: bool,
}

/// Everything a judge is shown about one agent's finished episode.
#[derive(Debug, Clone, Copy)]
pub struct JudgeRequest<'a> {
    pub trajectory: &'a Trajectory,
    pub demos: DemoSummary,
    /// Poses of both vehicles at every step, leader first.
    pub path: &'a [(Pose, Pose)],
}

pub trait Judge {
    /// One decision per request, in request order.
    fn judge_episode(&mut self, requests: &[JudgeRequest<'_>]) -> Vec<JudgeDecision>;
}

/// Scripted stand-in for the human trainer: accepts a trajectory when its
/// mean per-step evaluation reward strictly beats the current demonstrations'.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleJudge {
    /// Also require the episode to have reached the goal.
    #[serde(default)]
    pub require_goal: bool,
}

impl OracleJudge {
    pub fn decide(&self, trajectory: &Trajectory, demos: &DemoSummary) -> JudgeDecision {
        let better = trajectory.mean_eval_reward() > demos.mean_eval_reward;
        let finished = !self.require_goal || trajectory.term_reason == crate::world::TermReason::GoalReached;
        JudgeDecision {
            trajectory_id: trajectory.id,
            agent: trajectory.agent,
            accept: better && finished,
            source: JudgeSource::Oracle,
            latency: 0.0,
            timed_out: false,
        }
    }
}

impl Judge for OracleJudge {
    fn judge_episode(&mut self, requests: &[JudgeRequest<'_>]) -> Vec<JudgeDecision> {
        requests.iter().map(|r| self.decide(r.trajectory, &r.demos)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOutcome {
    Pooled,
    Replaced,
    Rejected,
}

/// Applies a verdict: accepted trajectories join the pool, and once the pool
/// holds at least its capacity in pairs it becomes the new demonstration set
/// and is emptied.
pub fn pool_insert_and_maybe_replace(
    learner: &mut AgentLearner,
    trajectory: &Trajectory,
    decision: &JudgeDecision,
) -> PoolOutcome {
    assert_eq!(decision.trajectory_id, trajectory.id, "decision belongs to another trajectory");
    if !decision.accept || trajectory.is_empty() {
        return PoolOutcome::Rejected;
    }
    learner.pool.push(trajectory.to_demo_episode());
    if !learner.pool.is_full() {
        return PoolOutcome::Pooled;
    }
    let episodes = learner.pool.drain();
    learner.demos = DemoSet::new(learner.agent, Provenance::SelfGenerated, episodes)
        .expect("pooled trajectories match the agent");
    PoolOutcome::Replaced
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::trajectory::{DemoEpisode, TrajectoryStep};
    use crate::algo::TrainConfig;
    use crate::world::{ActionId, TermReason};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trajectory(id: u64, len: usize, d: f64) -> Trajectory {
        Trajectory {
            id,
            agent: AgentKind::Leader,
            episode: id,
            steps: (0..len)
                .map(|_| TrajectoryStep {
                    obs: vec![d; 6],
                    action: ActionId::STRAIGHT,
                    log_prob: -1.6,
                    value: 0.0,
                    disc_reward: 0.0,
                })
                .collect(),
            term_reason: TermReason::GoalReached,
            bootstrap_value: 0.0,
        }
    }

    fn demo_summary(mean: f64) -> DemoSummary {
        DemoSummary { provenance: Provenance::ExpertSuboptimal, episodes: 1, pairs: 10, mean_eval_reward: mean }
    }

    #[test]
    fn oracle_uses_strict_inequality() {
        // d = 17.3 -> reward 1.0 at every step
        let t = trajectory(1, 5, 17.3);
        let oracle = OracleJudge::default();
        assert!(oracle.decide(&t, &demo_summary(0.6)).accept);
        assert!(!oracle.decide(&t, &demo_summary(1.0)).accept);
    }

    #[test]
    fn oracle_with_goal_requirement() {
        let mut t = trajectory(1, 5, 17.3);
        t.term_reason = TermReason::CollisionLeader;
        assert!(OracleJudge::default().decide(&t, &demo_summary(0.6)).accept);
        assert!(!OracleJudge { require_goal: true }.decide(&t, &demo_summary(0.6)).accept);
    }

    #[test]
    fn replacement_at_capacity() {
        let demos = DemoSet::new(
            AgentKind::Leader,
            Provenance::ExpertSuboptimal,
            vec![DemoEpisode { obs: vec![vec![10.0; 6]; 3], actions: vec![ActionId::STRAIGHT; 3] }],
        )
        .unwrap();
        let mut learner =
            AgentLearner::new(demos, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let accept = |t: &Trajectory| JudgeDecision {
            trajectory_id: t.id,
            agent: t.agent,
            accept: true,
            source: JudgeSource::Oracle,
            latency: 0.0,
            timed_out: false,
        };
        for i in 0..19 {
            let t = trajectory(i, 100, 17.3);
            assert_eq!(pool_insert_and_maybe_replace(&mut learner, &t, &accept(&t)), PoolOutcome::Pooled);
        }
        assert_eq!(learner.pool.total_pairs(), 1900);
        let rejected = trajectory(50, 100, 17.3);
        let mut no = accept(&rejected);
        no.accept = false;
        assert_eq!(pool_insert_and_maybe_replace(&mut learner, &rejected, &no), PoolOutcome::Rejected);
        assert_eq!(learner.pool.total_pairs(), 1900);

        let t = trajectory(99, 150, 17.3);
        assert_eq!(pool_insert_and_maybe_replace(&mut learner, &t, &accept(&t)), PoolOutcome::Replaced);
        assert_eq!(learner.pool.total_pairs(), 0);
        assert_eq!(learner.demos.total_pairs(), 2050);
        assert_eq!(learner.demos.provenance(), Provenance::SelfGenerated);
    }
}
