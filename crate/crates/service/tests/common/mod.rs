#![allow(dead_code)]

use magaisil_core::algo::Mode;
use magaisil_core::demos::{record_demos, write_demo_file, Quality};
use magaisil_core::par::Execution;
use magaisil_core::world::Task;
use magaisil_service::SessionConfig;
use std::path::Path;

/// Records a few scripted episodes into `dir` and returns a short session
/// config that uses them.
pub fn short_session(dir: &Path, mode: Mode, episodes: u64) -> SessionConfig {
    let task = Task::resolve("task1").unwrap();
    let demos = dir.join("demos");
    std::fs::create_dir_all(&demos).unwrap();
    let rec = record_demos(&task, Quality::Suboptimal, 3, 11, Execution::default()).unwrap();
    write_demo_file(&demos.join("leader.jsonl"), &rec.leader).unwrap();
    write_demo_file(&demos.join("follower.jsonl"), &rec.follower).unwrap();
    let mut c = SessionConfig {
        mode,
        episodes,
        checkpoint_interval: 2,
        demos_leader: Some(demos.join("leader.jsonl")),
        demos_follower: Some(demos.join("follower.jsonl")),
        out_dir: dir.join("run"),
        ..SessionConfig::default()
    };
    c.train.seed = 5;
    c.train.pool_capacity_pairs = 150;
    c
}
