//! The per-episode metrics log (`metrics.jsonl`) and the path log
//! (`paths.jsonl`) used by replay.

use magaisil_core::algo::{AgentEpisodeReport, AgentKind, EpisodeReport, Provenance};
use magaisil_core::replay::PathLayer;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PATHS_FILE: &str = "paths.jsonl";

/// One line of the metrics log: one agent's view of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: u64,
    pub agent: AgentKind,
    pub steps: usize,
    pub term_reason: String,
    pub mean_disc_reward: f64,
    pub mean_eval_reward: f64,
    pub success: bool,
    pub judged: bool,
    pub accepted: bool,
    pub timed_out: bool,
    pub pool_pairs: usize,
    pub demo_provenance: Provenance,
    pub demo_mean_eval_reward: f64,
    pub replaced: bool,
    pub progress: f64,
    pub disc_loss: f64,
    pub policy_entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl MetricsRecord {
    pub fn new(report: &EpisodeReport, a: &AgentEpisodeReport, timed_out: bool) -> Self {
        Self {
            episode: report.episode,
            agent: a.agent,
            steps: a.steps,
            term_reason: a.term_reason.as_str().to_string(),
            mean_disc_reward: a.mean_disc_reward,
            mean_eval_reward: a.mean_eval_reward,
            success: a.success,
            judged: a.judged,
            accepted: a.accepted,
            timed_out,
            pool_pairs: a.pool_pairs,
            demo_provenance: a.demo_provenance,
            demo_mean_eval_reward: a.demo_mean_eval_reward,
            replaced: a.replaced,
            progress: report.progress,
            disc_loss: a.disc_loss,
            policy_entropy: a.ppo.entropy,
            fault: a.fault.clone(),
        }
    }
}

/// Both vehicles' poses for one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    #[serde(default)]
    pub episode: u64,
    #[serde(default)]
    pub term_reason: String,
    pub leader: Vec<[f64; 2]>,
    pub follower: Vec<[f64; 2]>,
}

impl PathRecord {
    pub fn layers(&self) -> Vec<PathLayer> {
        vec![
            PathLayer::new("leader", "#d62728", self.leader.clone()),
            PathLayer::new("follower", "#1f77b4", self.follower.clone()),
        ]
    }
}

/// Reads every record of a JSON-lines file.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Appends records to the metrics and path logs, flushing after each episode.
pub struct RunLog {
    metrics: BufWriter<File>,
    paths: BufWriter<File>,
    pub metrics_path: PathBuf,
    pub paths_path: PathBuf,
}

impl RunLog {
    /// Opens the logs in `dir`. Existing lines for episodes at or beyond
    /// `keep_before` are dropped (they belong to work a resumed run redoes).
    pub fn open(dir: &Path, keep_before: u64) -> std::io::Result<(Self, Vec<MetricsRecord>)> {
        std::fs::create_dir_all(dir)?;
        let metrics_path = dir.join(METRICS_FILE);
        let paths_path = dir.join(PATHS_FILE);
        let kept_metrics: Vec<MetricsRecord> = if keep_before > 0 && metrics_path.exists() {
            read_jsonl::<MetricsRecord>(&metrics_path)?.into_iter().filter(|r| r.episode < keep_before).collect()
        } else {
            Vec::new()
        };
        let kept_paths: Vec<PathRecord> = if keep_before > 0 && paths_path.exists() {
            read_jsonl::<PathRecord>(&paths_path)?.into_iter().filter(|r| r.episode < keep_before).collect()
        } else {
            Vec::new()
        };
        let mut log = Self {
            metrics: BufWriter::new(File::create(&metrics_path)?),
            paths: BufWriter::new(File::create(&paths_path)?),
            metrics_path,
            paths_path,
        };
        for r in &kept_metrics {
            log.write_line_metrics(r)?;
        }
        for p in &kept_paths {
            writeln!(log.paths, "{}", serde_json::to_string(p).expect("path record"))?;
        }
        log.flush()?;
        Ok((log, kept_metrics))
    }

    fn write_line_metrics(&mut self, r: &MetricsRecord) -> std::io::Result<()> {
        writeln!(self.metrics, "{}", serde_json::to_string(r).expect("metrics record"))
    }

    pub fn append(&mut self, records: &[MetricsRecord], path: &PathRecord) -> std::io::Result<()> {
        for r in records {
            self.write_line_metrics(r)?;
        }
        writeln!(self.paths, "{}", serde_json::to_string(path).expect("path record"))?;
        self.flush()
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.metrics.flush()?;
        self.paths.flush()
    }
}
