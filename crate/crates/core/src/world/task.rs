//! Task files: corridor geometry plus vehicle kinematics, stored as TOML.

use super::corridor::{Corridor, Obstacle};
use super::geometry::Vec2;
use super::{Pose, WorldError};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Tasks compiled into the binary, addressable by id.
pub const BUILTIN_TASKS: [(&str, &str); 3] = [
    ("task1", include_str!("../../tasks/task1.toml")),
    ("task2", include_str!("../../tasks/task2.toml")),
    ("task3", include_str!("../../tasks/task3.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicsConfig {
    /// m/s
    pub forward_speed: f64,
    /// Yaw rate per radian of rudder deflection, 1/s.
    pub yaw_gain: f64,
    /// Seconds per step.
    pub dt: f64,
    pub max_steps: usize,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self { forward_speed: 1.5, yaw_gain: 0.3, dt: 0.5, max_steps: 600 }
    }
}

/// Spawn poses. When omitted, the leader starts 18 m and the follower 1 m
/// along the centerline, both facing down the first segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    /// `[x, y, heading]`
    #[serde(default)]
    pub leader: Option<[f64; 3]>,
    #[serde(default)]
    pub follower: Option<[f64; 3]>,
    /// Half-width of the uniform sideways spawn perturbation, meters.
    #[serde(default = "default_lateral_jitter")]
    pub lateral_jitter: f64,
    /// Half-width of the uniform heading perturbation, radians.
    #[serde(default = "default_heading_jitter")]
    pub heading_jitter: f64,
}

fn default_lateral_jitter() -> f64 {
    1.0
}

fn default_heading_jitter() -> f64 {
    0.05
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            leader: None,
            follower: None,
            lateral_jitter: default_lateral_jitter(),
            heading_jitter: default_heading_jitter(),
        }
    }
}

/// On-disk schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    #[serde(default)]
    pub id: Option<String>,
    pub width: f64,
    pub goal_progress: f64,
    pub centerline: Vec<[f64; 2]>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub kinematics: KinematicsConfig,
    #[serde(default)]
    pub start: StartConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub corridor: Corridor,
    pub kinematics: KinematicsConfig,
    pub start: StartConfig,
}

impl Task {
    pub fn from_toml_str(text: &str, fallback_id: &str) -> Result<Self, WorldError> {
        let file: TaskFile = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        Self::from_file(file, fallback_id)
    }

    pub fn from_file(file: TaskFile, fallback_id: &str) -> Result<Self, WorldError> {
        let k = &file.kinematics;
        for (name, v) in [
            ("kinematics.forward_speed", k.forward_speed),
            ("kinematics.yaw_gain", k.yaw_gain),
            ("kinematics.dt", k.dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorldError::InvalidTask {
                    field: name.into(),
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if k.max_steps == 0 {
            return Err(WorldError::InvalidTask {
                field: "kinematics.max_steps".into(),
                reason: "must be positive".into(),
            });
        }
        let s = &file.start;
        if !(s.lateral_jitter >= 0.0 && s.heading_jitter >= 0.0) {
            return Err(WorldError::InvalidTask {
                field: "start".into(),
                reason: "jitter must be non-negative".into(),
            });
        }
        let centerline = file.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let corridor = Corridor::new(centerline, file.width, file.obstacles.clone(), file.goal_progress)?;
        let task = Task {
            id: file.id.clone().unwrap_or_else(|| fallback_id.to_string()),
            corridor,
            kinematics: file.kinematics,
            start: file.start,
        };
        let (leader, follower) = task.start_poses();
        for (name, pose) in [("start.leader", leader), ("start.follower", follower)] {
            if !task.corridor.is_free(pose.position()) {
                return Err(WorldError::InvalidTask {
                    field: name.into(),
                    reason: "spawn pose is outside the free space".into(),
                });
            }
        }
        Ok(task)
    }

    pub fn builtin(id: &str) -> Option<Self> {
        BUILTIN_TASKS
            .iter()
            .find(|(name, _)| *name == id)
            .map(|(name, text)| Task::from_toml_str(text, name).expect("builtin task is valid"))
    }

    /// Loads `spec` as a path if it exists, otherwise as a builtin id.
    pub fn resolve(spec: &str) -> Result<Self, WorldError> {
        let path = Path::new(spec);
        if path.exists() {
            return load_task(path);
        }
        Task::builtin(spec).ok_or_else(|| WorldError::Io {
            path: spec.to_string(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no such file and not a builtin task id (task1, task2, task3)",
            ),
        })
    }

    pub fn start_poses(&self) -> (Pose, Pose) {
        let along = |s: f64| {
            let (p, dir) = self.corridor.point_at(s);
            Pose::new(p.x, p.y, dir.angle())
        };
        let leader = self
            .start
            .leader
            .map(|[x, y, h]| Pose::new(x, y, h))
            .unwrap_or_else(|| along(18.0));
        let follower = self
            .start
            .follower
            .map(|[x, y, h]| Pose::new(x, y, h))
            .unwrap_or_else(|| along(1.0));
        (leader, follower)
    }

    pub fn to_file(&self) -> TaskFile {
        TaskFile {
            id: Some(self.id.clone()),
            width: self.corridor.width(),
            goal_progress: self.corridor.goal_progress(),
            centerline: self.corridor.centerline().iter().map(|p| [p.x, p.y]).collect(),
            obstacles: self.corridor.obstacles().to_vec(),
            kinematics: self.kinematics,
            start: self.start,
        }
    }
}

pub fn load_task(path: impl AsRef<Path>) -> Result<Task, WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("task");
    Task::from_toml_str(&text, stem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WallSide;

    #[test]
    fn builtin_tasks_load() {
        let t1 = Task::builtin("task1").unwrap();
        assert_eq!(t1.corridor.width(), 30.0);
        assert_eq!(t1.corridor.goal_progress(), 240.0);
        assert!(t1.corridor.obstacles().is_empty());

        let t2 = Task::builtin("task2").unwrap();
        assert!(!t2.corridor.obstacles().is_empty());
        assert!(t2
            .corridor
            .obstacles()
            .iter()
            .all(|o| o.length == 20.0 && o.width == 5.0));
        assert!(t2.corridor.obstacles().iter().any(|o| o.side == WallSide::Left));
        assert!(t2.corridor.obstacles().iter().any(|o| o.side == WallSide::Right));

        let t3 = Task::builtin("task3").unwrap();
        assert_eq!(t3.corridor.goal_progress(), 300.0);
    }

    #[test]
    fn start_poses_default_to_builtin_positions() {
        let t1 = Task::builtin("task1").unwrap();
        let (l, f) = t1.start_poses();
        assert_eq!((l.x, l.y, l.heading), (18.0, 0.0, 0.0));
        assert_eq!((f.x, f.y, f.heading), (1.0, 0.0, 0.0));
    }

    #[test]
    fn zero_width_is_rejected() {
        let text = "width = 0.0\ngoal_progress = 10.0\ncenterline = [[0.0, 0.0], [100.0, 0.0]]\n";
        let err = Task::from_toml_str(text, "bad").unwrap_err();
        assert!(matches!(err, WorldError::InvalidTask { ref field, .. } if field == "width"));
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let text = "width = 30.0\ngoal_progress = 10.0\ncenterline = [[0.0, 0.0], [100.0, 0.0]]\nbogus = 1\n";
        assert!(matches!(Task::from_toml_str(text, "bad"), Err(WorldError::Parse(_))));
    }

    #[test]
    fn file_round_trip() {
        let t2 = Task::builtin("task2").unwrap();
        let text = toml::to_string(&t2.to_file()).unwrap();
        assert_eq!(Task::from_toml_str(&text, "x").unwrap(), t2);
    }
}
