//! Deterministic planar simulation of a leader and a follower vehicle inside a
//! walled pipe.
//!
//! Both vehicles move as unicycles at constant forward speed; the only control
//! is a discrete rudder deflection that sets the yaw rate. Each vehicle carries
//! a six-sector sonar. Episodes end on collision, loss of formation, excessive
//! follower heading deviation, reaching the goal, or the step limit.

mod corridor;
pub mod geometry;
mod reward;
mod sonar;
mod task;

pub use corridor::{Corridor, Obstacle, WallSide};
pub use geometry::{normalize_angle, Vec2};
pub use reward::{
    eval_reward_follower, eval_reward_leader, follower_tracking_reward, SAFE_DISTANCE,
    TARGET_SPACING,
};
pub use sonar::{
    beam_angle, raycast_sonar, raycast_sonar_with_range, SonarScan, BEAMS, BEAMS_PER_SECTOR,
    HALF_FOV, MAX_RANGE, SECTORS,
};
pub use task::{load_task, KinematicsConfig, StartConfig, Task, TaskFile, BUILTIN_TASKS};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read task file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse task file: {0}")]
    Parse(String),
    #[error("invalid task: {field}: {reason}")]
    InvalidTask { field: String, reason: String },
    #[error("pose ({x:.3}, {y:.3}) is outside the pipe free space")]
    OutsideFreeSpace { x: f64, y: f64 },
    #[error("episode already finished; reset before stepping")]
    EpisodeFinished,
}

/// Collision when the nearest sonar return is at or below this.
pub const COLLISION_DISTANCE: f64 = 2.0;
pub const MIN_SPACING: f64 = 3.0;
pub const MAX_SPACING: f64 = 33.0;
pub const MAX_HEADING_DEVIATION: f64 = FRAC_PI_3;
/// Slack on the inclusive heading bound: π/3 computed as `PI / 3.0` is one
/// ulp below `FRAC_PI_3` and must still terminate.
const HEADING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians from the world +x axis, in (-π, π].
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderObs {
    pub sonar: SonarScan,
}

impl LeaderObs {
    pub const DIM: usize = SECTORS;

    pub fn to_vec(&self) -> Vec<f64> {
        self.sonar.sector_min.to_vec()
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let sector_min: [f64; SECTORS] = v.try_into().ok()?;
        Some(Self { sonar: SonarScan { sector_min } })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerObs {
    /// Distance between the vehicles.
    pub g_f: f64,
    /// Follower heading minus bearing to the leader.
    pub a_f: f64,
    pub sonar: SonarScan,
}

impl FollowerObs {
    pub const DIM: usize = 2 + SECTORS;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        v.push(self.g_f);
        v.push(self.a_f);
        v.extend_from_slice(&self.sonar.sector_min);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != Self::DIM {
            return None;
        }
        let sector_min: [f64; SECTORS] = v[2..].try_into().ok()?;
        Some(Self { g_f: v[0], a_f: v[1], sonar: SonarScan { sector_min } })
    }
}

/// One of the five rudder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActionId(u8);

/// Rudder angles in degrees: upper, right, lower, left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RudderSet {
    pub upper: f64,
    pub right: f64,
    pub lower: f64,
    pub left: f64,
}

impl ActionId {
    pub const COUNT: usize = 5;
    pub const TURN_LEFT_2: ActionId = ActionId(0);
    pub const TURN_LEFT_1: ActionId = ActionId(1);
    pub const STRAIGHT: ActionId = ActionId(2);
    pub const TURN_RIGHT_1: ActionId = ActionId(3);
    pub const TURN_RIGHT_2: ActionId = ActionId(4);

    pub fn new(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(ActionId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..Self::COUNT as u8).map(ActionId)
    }

    /// Signed yaw deflection in degrees; positive turns counter-clockwise (left).
    pub fn deflection_deg(self) -> f64 {
        [20.0, 14.0, 0.0, -14.0, -20.0][self.index()]
    }

    pub fn deflection_rad(self) -> f64 {
        self.deflection_deg().to_radians()
    }

    /// Rudder table for the 3D vehicle; left/right (dive) rudders stay at zero.
    pub fn rudders(self) -> RudderSet {
        let upper = -self.deflection_deg();
        RudderSet { upper, right: 0.0, lower: -upper, left: 0.0 }
    }

    pub fn name(self) -> &'static str {
        ["turn-left-2", "turn-left-1", "straight", "turn-right-1", "turn-right-2"][self.index()]
    }
}

impl TryFrom<u8> for ActionId {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        ActionId::new(v as usize).ok_or_else(|| format!("action index {v} out of range 0..5"))
    }
}

impl From<ActionId> for u8 {
    fn from(a: ActionId) -> u8 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermReason {
    None,
    CollisionLeader,
    CollisionFollower,
    SpacingViolation,
    HeadingViolation,
    GoalReached,
    StepLimit,
}

impl TermReason {
    pub fn is_done(self) -> bool {
        self != TermReason::None
    }

    /// Ended in a state the agent could not have avoided by design (time-out),
    /// as opposed to a true terminal state.
    pub fn is_truncation(self) -> bool {
        self == TermReason::StepLimit
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TermReason::None => "none",
            TermReason::CollisionLeader => "collision_leader",
            TermReason::CollisionFollower => "collision_follower",
            TermReason::SpacingViolation => "spacing_violation",
            TermReason::HeadingViolation => "heading_violation",
            TermReason::GoalReached => "goal_reached",
            TermReason::StepLimit => "step_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub leader_obs: LeaderObs,
    pub follower_obs: FollowerObs,
    pub done: bool,
    pub term_reason: TermReason,
    /// Leader arc length along the centerline.
    pub progress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerGeometry {
    pub g_f: f64,
    pub a_f: f64,
    /// Vehicles coincide; the bearing is undefined and `a_f` is reported as 0.
    pub degenerate: bool,
}

pub fn follower_geometry(leader: &Pose, follower: &Pose) -> FollowerGeometry {
    let dx = leader.x - follower.x;
    let dy = leader.y - follower.y;
    let g_f = dx.hypot(dy);
    if g_f == 0.0 {
        return FollowerGeometry { g_f, a_f: 0.0, degenerate: true };
    }
    let bearing = dy.atan2(dx);
    FollowerGeometry { g_f, a_f: normalize_angle(follower.heading - bearing), degenerate: false }
}

/// Raw quantities the termination rules look at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationInputs {
    pub d_l: f64,
    pub d_f: f64,
    pub leader_free: bool,
    pub follower_free: bool,
    pub g_f: f64,
    pub a_f: f64,
    pub progress: f64,
    pub steps: usize,
}

/// Applies the termination rules in priority order.
pub fn classify_termination(
    t: &TerminationInputs,
    goal_progress: f64,
    max_steps: usize,
) -> TermReason {
    if !t.leader_free || t.d_l.abs() <= COLLISION_DISTANCE {
        TermReason::CollisionLeader
    } else if !t.follower_free || t.d_f.abs() <= COLLISION_DISTANCE {
        TermReason::CollisionFollower
    } else if t.g_f < MIN_SPACING || t.g_f > MAX_SPACING {
        TermReason::SpacingViolation
    } else if t.a_f.abs() >= MAX_HEADING_DEVIATION - HEADING_SLACK {
        TermReason::HeadingViolation
    } else if t.progress >= goal_progress {
        TermReason::GoalReached
    } else if t.steps >= max_steps {
        TermReason::StepLimit
    } else {
        TermReason::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub leader: Pose,
    pub follower: Pose,
    pub steps: usize,
    pub done: bool,
}

impl WorldState {
    pub fn new(leader: Pose, follower: Pose) -> Self {
        Self { leader, follower, steps: 0, done: false }
    }

    /// Start poses of the task with no perturbation.
    pub fn start(task: &Task) -> Self {
        let (leader, follower) = task.start_poses();
        Self::new(leader, follower)
    }

    /// Start poses perturbed by the task's lateral/heading jitter.
    pub fn start_jittered<R: Rng + ?Sized>(task: &Task, rng: &mut R) -> Self {
        let (leader, follower) = task.start_poses();
        let s = &task.start;
        let mut jitter = |p: Pose| {
            let dir = Vec2::from_angle(p.heading);
            let lateral = if s.lateral_jitter > 0.0 {
                rng.gen_range(-s.lateral_jitter..=s.lateral_jitter)
            } else {
                0.0
            };
            let heading = if s.heading_jitter > 0.0 {
                rng.gen_range(-s.heading_jitter..=s.heading_jitter)
            } else {
                0.0
            };
            let pos = p.position() + dir.perp() * lateral;
            Pose::new(pos.x, pos.y, p.heading + heading)
        };
        let leader = jitter(leader);
        let follower = jitter(follower);
        Self::new(leader, follower)
    }

    /// Observations at the current poses.
    pub fn observe(&self, task: &Task) -> StepOutcome {
        let corridor = &task.corridor;
        let leader_scan = sonar::scan_unchecked(corridor, &self.leader, MAX_RANGE);
        let follower_scan = sonar::scan_unchecked(corridor, &self.follower, MAX_RANGE);
        let geo = follower_geometry(&self.leader, &self.follower);
        let progress = corridor.progress(self.leader.position());
        let term_reason = if self.steps == 0 && !self.done {
            TermReason::None
        } else {
            classify_termination(
                &TerminationInputs {
                    d_l: leader_scan.nearest(),
                    d_f: follower_scan.nearest(),
                    leader_free: corridor.is_free(self.leader.position()),
                    follower_free: corridor.is_free(self.follower.position()),
                    g_f: geo.g_f,
                    a_f: geo.a_f,
                    progress,
                    steps: self.steps,
                },
                corridor.goal_progress(),
                task.kinematics.max_steps,
            )
        };
        StepOutcome {
            leader_obs: LeaderObs { sonar: leader_scan },
            follower_obs: FollowerObs { g_f: geo.g_f, a_f: geo.a_f, sonar: follower_scan },
            done: term_reason.is_done(),
            term_reason,
            progress,
        }
    }
}

fn advance(pose: &Pose, action: ActionId, k: &KinematicsConfig) -> Pose {
    let heading = pose.heading + k.yaw_gain * action.deflection_rad() * k.dt;
    let heading = normalize_angle(heading);
    let dist = k.forward_speed * k.dt;
    Pose::new(pose.x + dist * heading.cos(), pose.y + dist * heading.sin(), heading)
}

/// Advances both vehicles one tick and evaluates termination.
pub fn step(
    task: &Task,
    state: &mut WorldState,
    leader_action: ActionId,
    follower_action: ActionId,
) -> Result<StepOutcome, WorldError> {
    if state.done {
        return Err(WorldError::EpisodeFinished);
    }
    state.leader = advance(&state.leader, leader_action, &task.kinematics);
    state.follower = advance(&state.follower, follower_action, &task.kinematics);
    state.steps += 1;
    let outcome = state.observe(task);
    state.done = outcome.done;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn inputs() -> TerminationInputs {
        TerminationInputs {
            d_l: 17.0,
            d_f: 17.0,
            leader_free: true,
            follower_free: true,
            g_f: 18.0,
            a_f: 0.0,
            progress: 10.0,
            steps: 1,
        }
    }

    #[test]
    fn geometry_examples() {
        let g = follower_geometry(&Pose::new(18.0, 0.0, 0.0), &Pose::new(1.0, 0.0, 0.0));
        assert_eq!(g.g_f, 17.0);
        assert_eq!(g.a_f, 0.0);
        let g = follower_geometry(&Pose::new(10.0, 10.0, 0.0), &Pose::new(10.0, 0.0, 0.0));
        assert!((g.g_f - 10.0).abs() < 1e-12);
        assert!((g.a_f + FRAC_PI_2).abs() < 1e-12);
        let g = follower_geometry(&Pose::new(3.0, 4.0, 1.0), &Pose::new(3.0, 4.0, 1.0));
        assert!(g.degenerate && g.a_f == 0.0 && g.g_f == 0.0);
    }

    #[test]
    fn termination_boundaries() {
        let classify = |t: TerminationInputs| classify_termination(&t, 240.0, 600);
        assert_eq!(classify(inputs()), TermReason::None);
        assert_eq!(classify(TerminationInputs { d_l: 2.0, ..inputs() }), TermReason::CollisionLeader);
        assert_eq!(classify(TerminationInputs { d_f: 2.0, ..inputs() }), TermReason::CollisionFollower);
        assert_eq!(classify(TerminationInputs { d_l: 2.0001, ..inputs() }), TermReason::None);
        assert_eq!(classify(TerminationInputs { g_f: 3.0, ..inputs() }), TermReason::None);
        assert_eq!(classify(TerminationInputs { g_f: 33.0, ..inputs() }), TermReason::None);
        assert_eq!(classify(TerminationInputs { g_f: 2.99, ..inputs() }), TermReason::SpacingViolation);
        assert_eq!(classify(TerminationInputs { g_f: 33.01, ..inputs() }), TermReason::SpacingViolation);
        assert_eq!(classify(TerminationInputs { a_f: FRAC_PI_3, ..inputs() }), TermReason::HeadingViolation);
        assert_eq!(classify(TerminationInputs { a_f: -FRAC_PI_3, ..inputs() }), TermReason::HeadingViolation);
        assert_eq!(classify(TerminationInputs { a_f: std::f64::consts::PI / 3.0, ..inputs() }), TermReason::HeadingViolation);
        assert_eq!(classify(TerminationInputs { a_f: 1.047, ..inputs() }), TermReason::None);
        assert_eq!(classify(TerminationInputs { progress: 240.0, ..inputs() }), TermReason::GoalReached);
        assert_eq!(classify(TerminationInputs { steps: 600, ..inputs() }), TermReason::StepLimit);
        // collisions outrank everything else
        let all_bad = TerminationInputs { d_l: 1.0, d_f: 1.0, g_f: 50.0, a_f: 3.0, ..inputs() };
        assert_eq!(classify(all_bad), TermReason::CollisionLeader);
    }

    #[test]
    fn action_table() {
        assert_eq!(ActionId::STRAIGHT.deflection_deg(), 0.0);
        let r = ActionId::TURN_LEFT_1.rudders();
        assert_eq!((r.upper, r.right, r.lower, r.left), (-14.0, 0.0, 14.0, 0.0));
        let r = ActionId::TURN_RIGHT_2.rudders();
        assert_eq!((r.upper, r.lower), (20.0, -20.0));
        assert!(ActionId::new(5).is_none());
        assert_eq!(ActionId::all().count(), 5);
    }

    #[test]
    fn observation_vectors_round_trip() {
        let obs = FollowerObs {
            g_f: 17.0,
            a_f: 0.1,
            sonar: SonarScan { sector_min: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] },
        };
        assert_eq!(FollowerObs::from_slice(&obs.to_vec()), Some(obs));
        assert!(LeaderObs::from_slice(&[1.0; 5]).is_none());
    }
}
