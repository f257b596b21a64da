//! The structured config file. Each subcommand reads its own table;
//! `[train]` holds a full session config (shared by `train` and `serve`).

use magaisil_core::demos::Quality;
use magaisil_service::SessionConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub train: Option<SessionConfig>,
    #[serde(default, rename = "gen-demos")]
    pub gen_demos: GenDemosSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub replay: ReplaySection,
    pub serve_host: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDemosSection {
    pub task: Option<String>,
    pub quality: Option<Quality>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub task: Option<String>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub series: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub trajectory_file: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub episode: Option<u64>,
    pub task: Option<String>,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
