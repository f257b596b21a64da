//! `magaisil`: generate demonstrations, train, evaluate, render replays and
//! serve the judging API.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime fault.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{CliConfig, EvalSection, GenDemosSection, ReplaySection};
use magaisil_core::algo::{Mode, TrainingCheckpoint};
use magaisil_core::demos::{record_demos, write_demo_file, Quality};
use magaisil_core::eval::{evaluate_learners, EvalReport};
use magaisil_core::par::Execution;
use magaisil_core::replay::{layers_from_path, render_svg, PathLayer};
use magaisil_core::world::{Pose, Task};
use magaisil_service::metrics::{read_jsonl, PATHS_FILE};
use magaisil_service::{run_session, serve_api, JudgeKind, PathRecord, SessionConfig, SharedState};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "magaisil", version, about = "Leader/follower pipe navigation learned from demonstrations")]
struct Cli {
    /// Structured config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run batch math and evaluation on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record scripted demonstrations, one file per agent.
    GenDemos(GenDemosArgs),
    /// Train both agents (MAGAIL or MAGAISIL).
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Render a pipe and vehicle paths as SVG.
    Replay(ReplayArgs),
    /// Train with the judging API running (required for human judging).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenDemosArgs {
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    quality: Option<Quality>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for leader.jsonl, follower.jsonl and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    judge: Option<JudgeKind>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    demos_leader: Option<PathBuf>,
    #[arg(long)]
    demos_follower: Option<PathBuf>,
    /// Quality of the demonstrations recorded when no demo files are given.
    #[arg(long)]
    demo_quality: Option<Quality>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Seconds to wait for a human verdict before rejecting.
    #[arg(long)]
    judgment_timeout: Option<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to the task the checkpoint was trained on.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-step distance, spacing and heading series.
    #[arg(long)]
    series: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Eval report (JSON), path record (JSON) or path log (JSON lines).
    #[arg(long, conflicts_with = "metrics")]
    trajectory_file: Option<PathBuf>,
    /// A run's metrics log; paths are read from the path log beside it.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Episode to draw (default: first eval episode, or last training episode).
    #[arg(long)]
    episode: Option<u64>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => CliConfig::load(p).map_err(usage)?,
        None => CliConfig::default(),
    };
    let exec = if cli.sequential { Some(Execution::Sequential) } else { None };
    match cli.command {
        Command::GenDemos(a) => gen_demos(a, file.gen_demos, exec),
        Command::Train(a) => train(&a, file.train, exec, None),
        Command::Serve(a) => {
            let host = a.host.clone().or(file.serve_host.clone()).unwrap_or_else(|| "127.0.0.1".into());
            train(&a.train, file.train, exec, Some((host, a.port)))
        }
        Command::Eval(a) => eval(a, file.eval, exec),
        Command::Replay(a) => replay(a, file.replay),
    }
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, text + "\n").map_err(|e| runtime(format!("{}: {e}", p.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn resolve_task(spec: &str) -> Result<Task, CliError> {
    Task::resolve(spec).map_err(|e| usage(format!("task {spec:?}: {e}")))
}

fn gen_demos(a: GenDemosArgs, f: GenDemosSection, exec: Option<Execution>) -> Result<(), CliError> {
    let task_spec = a.task.or(f.task).unwrap_or_else(|| "task1".into());
    let quality = a.quality.or(f.quality).unwrap_or(Quality::Optimal);
    let episodes = a.episodes.or(f.episodes).unwrap_or(10);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.or(f.out).unwrap_or_else(|| PathBuf::from("demos"));
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let task = resolve_task(&task_spec)?;
    let recorded = record_demos(&task, quality, episodes, seed, exec.unwrap_or_default()).map_err(runtime)?;
    std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    write_demo_file(&out.join("leader.jsonl"), &recorded.leader).map_err(runtime)?;
    write_demo_file(&out.join("follower.jsonl"), &recorded.follower).map_err(runtime)?;
    write_json(Some(&out.join("report.json")), &recorded.report)?;
    write_json(None, &recorded.report)
}

/// Records demonstrations into `out_dir/demos` when the config names none.
fn ensure_demos(config: &mut SessionConfig, quality: Quality) -> Result<(), CliError> {
    if config.demos_leader.is_some() && config.demos_follower.is_some() {
        return Ok(());
    }
    if config.demos_leader.is_some() != config.demos_follower.is_some() {
        return Err(usage("give both --demos-leader and --demos-follower, or neither"));
    }
    let task = resolve_task(&config.task)?;
    let dir = config.out_dir.join("demos");
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let recorded =
        record_demos(&task, quality, 10, config.train.seed, config.train.execution).map_err(runtime)?;
    let (l, f) = (dir.join("leader.jsonl"), dir.join("follower.jsonl"));
    write_demo_file(&l, &recorded.leader).map_err(runtime)?;
    write_demo_file(&f, &recorded.follower).map_err(runtime)?;
    log::info!(
        "recorded {} {:?} demonstration episodes into {}",
        recorded.report.episodes,
        quality,
        dir.display()
    );
    config.demos_leader = Some(l);
    config.demos_follower = Some(f);
    Ok(())
}

fn train(
    a: &TrainArgs,
    file: Option<SessionConfig>,
    exec: Option<Execution>,
    serve: Option<(String, Option<u16>)>,
) -> Result<(), CliError> {
    let mut c = file.unwrap_or_default();
    c.apply_env().map_err(usage)?;
    if let Some(v) = a.mode {
        c.mode = v;
    }
    if let Some(v) = a.judge {
        c.judge = v;
    }
    if let Some(v) = &a.task {
        c.task = v.clone();
    }
    if let Some(v) = &a.demos_leader {
        c.demos_leader = Some(v.clone());
    }
    if let Some(v) = &a.demos_follower {
        c.demos_follower = Some(v.clone());
    }
    if let Some(v) = a.episodes {
        c.episodes = v;
    }
    if let Some(v) = a.seed {
        c.train.seed = v;
    }
    if let Some(v) = &a.out_dir {
        c.out_dir = v.clone();
    }
    if let Some(v) = a.checkpoint_interval {
        c.checkpoint_interval = v;
    }
    if let Some(v) = a.judgment_timeout {
        c.judgment_timeout_secs = v;
    }
    if let Some(e) = exec {
        c.train.execution = e;
    }
    c.resume |= a.resume;
    let host = match &serve {
        Some((host, port)) => {
            c.serve = true;
            if let Some(p) = port {
                c.port = *p;
            }
            host.clone()
        }
        None => {
            if c.judge == JudgeKind::Human {
                return Err(usage(
                    "--judge human needs the judging API: run `magaisil serve --mode magaisil --judge human ...` \
                     and open the UI, or use --judge oracle",
                ));
            }
            c.serve = false;
            String::new()
        }
    };
    c.validate_settings().map_err(usage)?;
    resolve_task(&c.task)?;
    ensure_demos(&mut c, a.demo_quality.unwrap_or(Quality::Optimal))?;
    c.validate().map_err(usage)?;

    let task = resolve_task(&c.task)?;
    let state = SharedState::new(c.clone(), task);
    let server = if c.serve { Some(serve_api(state.clone(), &host, c.port).map_err(runtime)?) } else { None };
    let result = run_session(&c, &state);
    if let Some(s) = server {
        s.stop();
    }
    let summary = result.map_err(runtime)?;
    write_json(None, &summary)
}

fn eval(a: EvalArgs, f: EvalSection, exec: Option<Execution>) -> Result<(), CliError> {
    let ck_path = a.checkpoint.or(f.checkpoint).ok_or_else(|| usage("--checkpoint is required"))?;
    let episodes = a.episodes.or(f.episodes).unwrap_or(20);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.or(f.out);
    let series = a.series || f.series.unwrap_or(false);
    if !ck_path.is_file() {
        return Err(usage(format!("checkpoint {} does not exist", ck_path.display())));
    }
    let ck = TrainingCheckpoint::load(&ck_path).map_err(runtime)?;
    let task = resolve_task(&a.task.or(f.task).unwrap_or_else(|| ck.task_id.clone()))?;
    let learners = ck.restore_learners().map_err(runtime)?;
    let exec = exec.unwrap_or(ck.config.execution);
    let report = evaluate_learners(&learners, &task, episodes, seed, series, exec).map_err(runtime)?;
    log::info!(
        "{}: success {:.0}% over {} episodes, mean leader reward {:.3}, mean follower reward {:.3}",
        task.id,
        100.0 * report.success_rate,
        episodes,
        report.mean_leader_reward,
        report.mean_follower_reward
    );
    write_json(out.as_deref(), &report)
}

fn replay(a: ReplayArgs, f: ReplaySection) -> Result<(), CliError> {
    let out = a.out.or(f.out).ok_or_else(|| usage("--out is required"))?;
    let episode = a.episode.or(f.episode);
    let (layers, task_hint) = match (a.trajectory_file.or(f.trajectory_file), a.metrics.or(f.metrics)) {
        (Some(p), _) => load_trajectory_file(&p, episode)?,
        (None, Some(m)) => {
            let paths = m.parent().unwrap_or(Path::new(".")).join(PATHS_FILE);
            let records: Vec<PathRecord> =
                read_jsonl(&paths).map_err(|e| usage(format!("{}: {e}", paths.display())))?;
            let ck = m.parent().unwrap_or(Path::new(".")).join("checkpoint.json");
            let task_hint = TrainingCheckpoint::load(&ck).ok().map(|c| c.task_id);
            (pick_path(&records, episode)?.layers(), task_hint)
        }
        (None, None) => return Err(usage("give --trajectory-file or --metrics")),
    };
    let task_spec = a.task.or(f.task).or(task_hint).unwrap_or_else(|| "task1".into());
    let task = resolve_task(&task_spec)?;
    let svg = render_svg(&task, &layers);
    std::fs::write(&out, svg).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn pick_path(records: &[PathRecord], episode: Option<u64>) -> Result<&PathRecord, CliError> {
    match episode {
        Some(e) => records.iter().find(|r| r.episode == e).ok_or_else(|| usage(format!("no path for episode {e}"))),
        None => records.last().ok_or_else(|| usage("path log is empty")),
    }
}

fn load_trajectory_file(path: &Path, episode: Option<u64>) -> Result<(Vec<PathLayer>, Option<String>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let parse_err = |e: serde_json::Error| usage(format!("{}: {e}", path.display()));
    if let Ok(report) = serde_json::from_str::<EvalReport>(&text) {
        let idx = episode.unwrap_or(0);
        let ep = report
            .episodes
            .iter()
            .find(|e| e.episode == idx)
            .ok_or_else(|| usage(format!("no episode {idx} in eval report")))?;
        if ep.series.is_empty() {
            return Err(usage("eval report has no series; rerun eval with --series"));
        }
        let path: Vec<(Pose, Pose)> = ep.series.iter().map(|s| (s.leader, s.follower)).collect();
        return Ok((layers_from_path(&path, ""), Some(report.task_id)));
    }
    if let Ok(rec) = serde_json::from_str::<PathRecord>(&text) {
        return Ok((rec.layers(), None));
    }
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(serde_json::from_str::<PathRecord>(line).map_err(parse_err)?);
    }
    Ok((pick_path(&records, episode)?.layers(), None))
}
