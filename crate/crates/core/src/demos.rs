//! Scripted demonstrators and the demonstration file format.
//!
//! Both controllers turn a signed steering demand into one of the five rudder
//! actions. The optimal variants act on the current observation. The
//! sub-optimal variants react to the observation from a few steps earlier and
//! take a random action part of the time, which makes them overshoot and
//! oscillate after turns.

use crate::algo::{
    rollout, ActionSample, AgentKind, AlgoError, DemoEpisode, DemoSet, DemoSetError, EpisodeRng,
    Pilot, Provenance,
};
use crate::par::Execution;
use crate::world::{ActionId, FollowerObs, LeaderObs, Task, TermReason, SAFE_DISTANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const DEMO_FORMAT: &str = "magaisil-demos";
pub const DEMO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("no episode reached the goal in {attempts} attempts")]
    NoCompletedEpisodes { attempts: usize },
    #[error(transparent)]
    DemoSet(#[from] DemoSetError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Optimal,
    Suboptimal,
}

impl Quality {
    pub fn provenance(self) -> Provenance {
        match self {
            Quality::Optimal => Provenance::ExpertOptimal,
            Quality::Suboptimal => Provenance::ExpertSuboptimal,
        }
    }
}

impl std::str::FromStr for Quality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimal" => Ok(Quality::Optimal),
            "suboptimal" => Ok(Quality::Suboptimal),
            other => Err(format!("unknown quality {other:?} (expected optimal or suboptimal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Steering demand per meter of left/right range difference.
    pub centering_gain: f64,
    /// Steering demand per radian of follower heading deviation.
    pub heading_gain: f64,
    /// Range below which a sector triggers an avoidance turn.
    pub avoid_range: f64,
    /// Demand below which the controller goes straight.
    pub deadband: f64,
    /// Demand above which the hard rudder is used.
    pub hard_turn: f64,
    /// Probability of replacing the chosen action with a uniform random one.
    pub random_action_prob: f64,
    /// Steps of lag between observing and acting.
    pub reaction_delay: usize,
    /// Amplitude in meters of a slow sideways drift of the centering set-point.
    pub wander_amplitude: f64,
    /// Period of that drift in steps.
    pub wander_period: f64,
}

impl ControllerParams {
    pub fn for_quality(quality: Quality) -> Self {
        let optimal = Self {
            centering_gain: 0.25,
            heading_gain: 12.0,
            avoid_range: 6.0,
            deadband: 0.2,
            hard_turn: 1.2,
            random_action_prob: 0.0,
            reaction_delay: 0,
            wander_amplitude: 0.0,
            wander_period: 60.0,
        };
        match quality {
            Quality::Optimal => optimal,
            Quality::Suboptimal => Self {
                random_action_prob: 0.2,
                reaction_delay: 3,
                wander_amplitude: 7.5,
                wander_period: 40.0,
                ..optimal
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    LeaderCentering,
    FollowerTracking,
}

/// A deterministic (given its seed) rule-based pilot.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    pub kind: ControllerKind,
    pub quality: Quality,
    pub params: ControllerParams,
    history: VecDeque<Vec<f64>>,
    rng: ChaCha8Rng,
    tick: u64,
    wander_phase: f64,
}

impl ScriptedController {
    pub fn new(kind: ControllerKind, quality: Quality, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let wander_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        Self {
            kind,
            quality,
            params: ControllerParams::for_quality(quality),
            history: VecDeque::new(),
            rng,
            tick: 0,
            wander_phase,
        }
    }

    /// Independent stream per (attempt, agent) so controllers can be replayed.
    pub fn for_episode(agent: AgentKind, quality: Quality, seed: u64, attempt: u64) -> Self {
        let kind = match agent {
            AgentKind::Leader => ControllerKind::LeaderCentering,
            AgentKind::Follower => ControllerKind::FollowerTracking,
        };
        Self::new(kind, quality, seed, (attempt << 1) | agent.index() as u64)
    }

    /// Next action for the newest observation, honouring delay and noise.
    pub fn next_action(&mut self, obs: &[f64]) -> ActionId {
        self.history.push_back(obs.to_vec());
        while self.history.len() > self.params.reaction_delay + 1 {
            self.history.pop_front();
        }
        let seen = self.history.front().expect("just pushed").clone();
        let offset = self.params.wander_amplitude
            * (std::f64::consts::TAU * self.tick as f64 / self.params.wander_period + self.wander_phase).sin();
        self.tick += 1;
        let action = match self.kind {
            ControllerKind::LeaderCentering => {
                let obs = LeaderObs::from_slice(&seen).expect("leader obs");
                quantize(clearance_demand(&obs, offset, &self.params), &self.params)
            }
            ControllerKind::FollowerTracking => {
                let obs = FollowerObs::from_slice(&seen).expect("follower obs");
                quantize(tracking_demand(&obs, offset, &self.params), &self.params)
            }
        };
        if self.params.random_action_prob > 0.0 && self.rng.gen::<f64>() < self.params.random_action_prob {
            ActionId::new(self.rng.gen_range(0..ActionId::COUNT)).expect("in range")
        } else {
            action
        }
    }
}

impl Pilot for ScriptedController {
    fn act(&mut self, obs: &[f64], _rng: &mut EpisodeRng) -> Result<ActionSample, AlgoError> {
        Ok(ActionSample { action: self.next_action(obs), log_prob: 0.0, value: 0.0 })
    }
}

fn quantize(demand: f64, p: &ControllerParams) -> ActionId {
    if demand > p.hard_turn {
        ActionId::TURN_LEFT_2
    } else if demand > p.deadband {
        ActionId::TURN_LEFT_1
    } else if demand < -p.hard_turn {
        ActionId::TURN_RIGHT_2
    } else if demand < -p.deadband {
        ActionId::TURN_RIGHT_1
    } else {
        ActionId::STRAIGHT
    }
}

// Range difference between the outer sectors per meter of lateral offset in a
// straight pipe (each beam at 60 degrees sees the wall at offset / sin 60).
const RANGE_PER_OFFSET: f64 = 2.0 / 0.866_025_403_784_438_6;

/// Positive when more free space lies to the left. Balances the outermost
/// sectors (around a set-point `offset` meters left of centre) and, when
/// something is close ahead, the inner flank sectors.
fn clearance_demand(obs: &LeaderObs, offset: f64, p: &ControllerParams) -> f64 {
    let s = &obs.sonar.sector_min;
    let mut demand = p.centering_gain * (s[5] - s[0] - RANGE_PER_OFFSET * offset);
    let ahead = s[2].min(s[3]);
    if ahead < 33.0 {
        // wall in front: weight the flank difference by how close it is
        let urgency = (33.0 - ahead) / 33.0;
        demand += 4.0 * urgency * p.centering_gain * (s[4] + s[5] - s[1] - s[0]) / 2.0;
    }
    if s.iter().any(|&d| d < p.avoid_range) {
        let left = s[3].min(s[4]).min(s[5]);
        let right = s[0].min(s[1]).min(s[2]);
        demand += if left < right { -2.0 * p.hard_turn } else { 2.0 * p.hard_turn };
    }
    demand
}

/// Keeps the leader centred: drives the outer sector ranges towards equality
/// (both at the safe distance in a straight pipe).
pub fn leader_controller(obs: &LeaderObs, p: &ControllerParams) -> ActionId {
    quantize(clearance_demand(obs, 0.0, p), p)
}

/// Steers the follower's heading onto the leader, deferring to wall clearance
/// when the pipe narrows.
pub fn follower_controller(obs: &FollowerObs, p: &ControllerParams) -> ActionId {
    quantize(tracking_demand(obs, 0.0, p), p)
}

fn tracking_demand(obs: &FollowerObs, offset: f64, p: &ControllerParams) -> f64 {
    let leader_view = LeaderObs { sonar: obs.sonar };
    if obs.sonar.nearest() < p.avoid_range {
        return clearance_demand(&leader_view, 0.0, p);
    }
    -p.heading_gain * obs.a_f + 0.5 * clearance_demand(&leader_view, offset, p)
}

/// One recorded episode, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub agent: AgentKind,
    pub provenance: Provenance,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActionId>,
    pub task_id: String,
    pub seed: u64,
    /// Attempt index within the recording run; with `seed` it identifies the
    /// controller's random stream.
    pub attempt: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DemoHeader {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub task_id: String,
    pub quality: Quality,
    pub episodes: usize,
    pub attempts: usize,
    pub leader_mean_eval_reward: f64,
    pub follower_mean_eval_reward: f64,
    pub leader_pairs: usize,
    pub follower_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedDemos {
    pub leader: Vec<DemoRecord>,
    pub follower: Vec<DemoRecord>,
    pub report: DemoReport,
}

impl RecordedDemos {
    pub fn demo_set(&self, agent: AgentKind) -> Result<DemoSet, DemoSetError> {
        let records = match agent {
            AgentKind::Leader => &self.leader,
            AgentKind::Follower => &self.follower,
        };
        records_to_set(agent, records)
    }
}

fn records_to_set(agent: AgentKind, records: &[DemoRecord]) -> Result<DemoSet, DemoSetError> {
    let provenance = records.first().map(|r| r.provenance).ok_or(DemoSetError::Empty)?;
    DemoSet::new(
        agent,
        provenance,
        records.iter().map(|r| DemoEpisode { obs: r.obs.clone(), actions: r.actions.clone() }).collect(),
    )
}

/// Runs the scripted pair until `episodes` of them reach the goal (at most
/// five attempts per wanted episode). Only goal-reaching episodes are kept.
pub fn record_demos(
    task: &Task,
    quality: Quality,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<RecordedDemos, DemoError> {
    let max_attempts = episodes.max(1) * 5;
    let mut kept: Vec<(u64, [DemoRecord; 2])> = Vec::new();
    let mut attempts = 0;
    while kept.len() < episodes && attempts < max_attempts {
        let batch = (episodes - kept.len()).min(max_attempts - attempts);
        let first = attempts as u64;
        let results = exec.map_range(batch, |k| run_scripted(task, quality, seed, first + k as u64));
        attempts += batch;
        for r in results {
            if let Some(pair) = r? {
                if kept.len() < episodes {
                    kept.push(pair);
                }
            }
        }
    }
    if kept.is_empty() {
        return Err(DemoError::NoCompletedEpisodes { attempts });
    }
    let (leader, follower): (Vec<_>, Vec<_>) = kept.into_iter().map(|(_, [l, f])| (l, f)).unzip();
    let leader_set = records_to_set(AgentKind::Leader, &leader)?;
    let follower_set = records_to_set(AgentKind::Follower, &follower)?;
    let report = DemoReport {
        task_id: task.id.clone(),
        quality,
        episodes: leader.len(),
        attempts,
        leader_mean_eval_reward: leader_set.mean_eval_reward(),
        follower_mean_eval_reward: follower_set.mean_eval_reward(),
        leader_pairs: leader_set.total_pairs(),
        follower_pairs: follower_set.total_pairs(),
    };
    Ok(RecordedDemos { leader, follower, report })
}

/// One scripted attempt; `None` if it did not reach the goal.
fn run_scripted(
    task: &Task,
    quality: Quality,
    seed: u64,
    attempt: u64,
) -> Result<Option<(u64, [DemoRecord; 2])>, DemoError> {
    let mut leader = ScriptedController::for_episode(AgentKind::Leader, quality, seed, attempt);
    let mut follower = ScriptedController::for_episode(AgentKind::Follower, quality, seed, attempt);
    let mut rng = crate::algo::episode_rng(seed, attempt);
    let r = rollout(task, &mut leader, &mut follower, attempt, &mut rng)?;
    if r.term_reason != TermReason::GoalReached {
        return Ok(None);
    }
    let records = r.trajectories.map(|t| DemoRecord {
        agent: t.agent,
        provenance: quality.provenance(),
        obs: t.steps.iter().map(|s| s.obs.clone()).collect(),
        actions: t.steps.iter().map(|s| s.action).collect(),
        task_id: task.id.clone(),
        seed,
        attempt,
    });
    Ok(Some((attempt, records)))
}

/// Writes one agent's records: a version header line, then one JSON record per
/// episode. The file appears atomically.
pub fn write_demo_file(path: &Path, records: &[DemoRecord]) -> Result<(), DemoError> {
    let io_err = |source| DemoError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp).map_err(io_err)?);
        let header = DemoHeader { format: DEMO_FORMAT.into(), version: DEMO_VERSION };
        writeln!(f, "{}", serde_json::to_string(&header).expect("header")).map_err(io_err)?;
        for r in records {
            writeln!(f, "{}", serde_json::to_string(r).expect("record")).map_err(io_err)?;
        }
        f.flush().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

pub fn read_demo_file(path: &Path) -> Result<Vec<DemoRecord>, DemoError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DemoError::Io { path: name.clone(), source })?;
    let parse_err = |line: usize, reason: String| DemoError::Parse { path: name.clone(), line, reason };
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?
        .map_err(|source| DemoError::Io { path: name.clone(), source })?;
    let header: DemoHeader = serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != DEMO_FORMAT || header.version != DEMO_VERSION {
        return Err(parse_err(1, format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut records: Vec<DemoRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|source| DemoError::Io { path: name.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 2, e.to_string()))?;
        if let Some(first) = records.first() {
            if rec.agent != first.agent || rec.provenance != first.provenance {
                return Err(parse_err(i + 2, "mixed agents or provenance in one file".into()));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

/// Loads a demo file straight into a validated demonstration set.
pub fn load_demo_set(path: &Path, expected: AgentKind) -> Result<DemoSet, DemoError> {
    let records = read_demo_file(path)?;
    if let Some(r) = records.first() {
        if r.agent != expected {
            return Err(DemoError::Parse {
                path: path.display().to_string(),
                line: 2,
                reason: format!("file holds {} demonstrations, expected {expected}", r.agent),
            });
        }
    }
    Ok(records_to_set(expected, &records)?)
}

/// Range the leader controller steers towards in a straight pipe.
pub const CENTERED_RANGE: f64 = SAFE_DISTANCE;
