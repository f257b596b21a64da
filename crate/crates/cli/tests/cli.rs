use std::path::Path;
use std::process::{Command, Output};

fn magaisil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magaisil"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("MAGAISIL_PORT")
        .env_remove("MAGAISIL_DATA_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&magaisil(&[])), 1);
    assert_eq!(code(&magaisil(&["train", "--bogus"])), 1);
    assert_eq!(code(&magaisil(&["train", "--mode", "gail"])), 1);
    assert_eq!(code(&magaisil(&["--help"])), 0);
    assert_eq!(code(&magaisil(&["eval"])), 1);
}

#[test]
fn human_judging_outside_serve_points_at_serve() {
    let d = tempfile::tempdir().unwrap();
    let o = magaisil(&["train", "--mode", "magaisil", "--judge", "human", "--out-dir", p(d.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("magaisil serve"), "{}", stderr(&o));
    assert!(std::fs::read_dir(d.path()).unwrap().next().is_none(), "nothing written");
}

#[test]
fn unknown_task_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = magaisil(&["gen-demos", "--task", "task9", "--out", p(d.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn gen_demos_writes_both_files_and_a_report() {
    let d = tempfile::tempdir().unwrap();
    let o = magaisil(&["gen-demos", "--quality", "suboptimal", "--episodes", "2", "--seed", "3", "--out", p(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&o);
    assert_eq!(report["episodes"], 2);
    assert_eq!(report["quality"], "suboptimal");
    for f in ["leader.jsonl", "follower.jsonl", "report.json"] {
        assert!(d.path().join(f).is_file(), "{f}");
    }
    let header = std::fs::read_to_string(d.path().join("leader.jsonl")).unwrap();
    assert!(header.lines().next().unwrap().contains("magaisil-demos"));
}

#[test]
fn train_eval_replay_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let run = d.path().join("run");
    let o = magaisil(&[
        "train", "--mode", "magaisil", "--episodes", "3", "--checkpoint-interval", "2", "--seed", "1", "--out-dir",
        p(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(&o);
    assert_eq!(summary["episodes_run"], 3);
    for f in ["metrics.jsonl", "paths.jsonl", "checkpoint.json", "demos/leader.jsonl", "demos/follower.jsonl"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let lines = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6);

    let ck = run.join("checkpoint.json");
    let report_path = d.path().join("eval.json");
    let o = magaisil(&[
        "eval", "--checkpoint", p(&ck), "--task", "task2", "--episodes", "2", "--series", "--out", p(&report_path),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["task_id"], "task2");
    assert_eq!(report["episodes"].as_array().unwrap().len(), 2);
    assert!(!report["episodes"][0]["series"].as_array().unwrap().is_empty());

    let svg = d.path().join("eval.svg");
    let o = magaisil(&["replay", "--trajectory-file", p(&report_path), "--episode", "1", "--out", p(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("class=\"obstacle\"").count(), 4, "task2 has obstacles");

    let svg = d.path().join("train.svg");
    let o = magaisil(&["replay", "--metrics", p(&run.join("metrics.jsonl")), "--episode", "0", "--out", p(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"path\"").count(), 2);
    assert_eq!(text.matches("class=\"obstacle\"").count(), 0, "task1 is clear");

    // resuming to the same episode count is a no-op run
    let o = magaisil(&["train", "--mode", "magaisil", "--episodes", "3", "--seed", "1", "--resume", "--out-dir", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["resumed_from"], 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("lab.toml");
    std::fs::write(&cfg, "[gen-demos]\nepisodes = 1\nquality = \"suboptimal\"\nseed = 2\n").unwrap();
    let out = d.path().join("demos");
    let o = magaisil(&["--config", p(&cfg), "gen-demos", "--quality", "optimal", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&o);
    assert_eq!(report["episodes"], 1);
    assert_eq!(report["quality"], "optimal");

    std::fs::write(&cfg, "[gen-demos]\nepisodez = 1\n").unwrap();
    assert_eq!(code(&magaisil(&["--config", p(&cfg), "gen-demos"])), 1);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    let ck = d.path().join("checkpoint.json");
    std::fs::write(&ck, "{\"version\": 1").unwrap();
    let o = magaisil(&["eval", "--checkpoint", p(&ck)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn sequential_flag_gives_identical_demos() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    assert_eq!(code(&magaisil(&["gen-demos", "--episodes", "2", "--out", p(&a)])), 0);
    assert_eq!(code(&magaisil(&["--sequential", "gen-demos", "--episodes", "2", "--out", p(&b)])), 0);
    for f in ["leader.jsonl", "follower.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}
