use magaisil_core::algo::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const ENV_PORT: &str = "MAGAISIL_PORT";
pub const ENV_DATA_DIR: &str = "MAGAISIL_DATA_DIR";
pub const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Oracle,
    Human,
}

impl std::str::FromStr for JudgeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(JudgeKind::Oracle),
            "human" => Ok(JudgeKind::Human),
            other => Err(format!("unknown judge {other:?} (expected oracle or human)")),
        }
    }
}

/// Everything needed to run (or resume) one training session. Mirrors the
/// structured config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    pub judge: JudgeKind,
    /// Builtin task id or path to a task file.
    pub task: String,
    pub train: TrainConfig,
    pub demos_leader: Option<PathBuf>,
    pub demos_follower: Option<PathBuf>,
    pub episodes: u64,
    /// Save a checkpoint every this many episodes (and always at the end).
    pub checkpoint_interval: u64,
    pub judgment_timeout_secs: f64,
    /// Metrics, paths and checkpoints are written here.
    pub out_dir: PathBuf,
    /// Continue from `out_dir/checkpoint.json` when present.
    pub resume: bool,
    /// Also require the goal for oracle acceptance.
    pub oracle_require_goal: bool,
    pub serve: bool,
    pub port: u16,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Magail,
            judge: JudgeKind::Oracle,
            task: "task1".into(),
            train: TrainConfig::default(),
            demos_leader: None,
            demos_follower: None,
            episodes: 1000,
            checkpoint_interval: 50,
            judgment_timeout_secs: 120.0,
            out_dir: PathBuf::from("run"),
            resume: false,
            oracle_require_goal: false,
            serve: false,
            port: DEFAULT_PORT,
        }
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Port and data directory from the environment win over the file.
    pub fn apply_env(&mut self) -> Result<(), String> {
        if let Ok(p) = std::env::var(ENV_PORT) {
            self.port = p.parse().map_err(|_| format!("{ENV_PORT}={p:?} is not a port number"))?;
        }
        if let Ok(d) = std::env::var(ENV_DATA_DIR) {
            self.out_dir = PathBuf::from(d);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.validate_settings()?;
        for (name, p) in [("demos_leader", &self.demos_leader), ("demos_follower", &self.demos_follower)] {
            match p {
                None => return Err(format!("{name} is required")),
                Some(p) if !p.is_file() => return Err(format!("{name}: {} does not exist", p.display())),
                _ => {}
            }
        }
        Ok(())
    }

    /// Everything `validate` checks except the demonstration files.
    pub fn validate_settings(&self) -> Result<(), String> {
        self.train.validate()?;
        if self.judge == JudgeKind::Human && !self.serve {
            return Err("human judging needs the judging API; start the session with `magaisil serve` \
                        (or use --judge oracle)"
                .into());
        }
        if self.judge == JudgeKind::Human && self.mode == Mode::Magail {
            return Err("MAGAIL runs never consult a judge; use --mode magaisil for human judging".into());
        }
        if self.checkpoint_interval == 0 {
            return Err("checkpoint_interval must be at least 1".into());
        }
        if !(self.judgment_timeout_secs.is_finite() && self.judgment_timeout_secs > 0.0) {
            return Err("judgment_timeout_secs must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = SessionConfig::from_toml_str("mode = \"magaisil\"\nepisodes = 5\n[train]\nseed = 3\n").unwrap();
        assert_eq!(c.mode, Mode::Magaisil);
        assert_eq!(c.episodes, 5);
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.train.gamma, 0.99);
        let back = SessionConfig::from_toml_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SessionConfig::from_toml_str("episodez = 5").is_err());
    }

    #[test]
    fn human_judge_needs_server() {
        let c = SessionConfig { judge: JudgeKind::Human, mode: Mode::Magaisil, ..Default::default() };
        assert!(c.validate().unwrap_err().contains("serve"));
    }
}
