use magaisil_core::algo::{episode_rng, rollout, AgentKind, Provenance};
use magaisil_core::demos::{
    load_demo_set, read_demo_file, record_demos, write_demo_file, Quality,
    ScriptedController,
};
use magaisil_core::par::Execution;
use magaisil_core::replay::{layers_from_path, render_svg};
use magaisil_core::world::Task;

#[test]
fn demo_files_round_trip_exactly() {
    let task = Task::resolve("task2").unwrap();
    let rec = record_demos(&task, Quality::Suboptimal, 2, 4, Execution::Sequential).unwrap();
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("follower.jsonl");
    write_demo_file(&path, &rec.follower).unwrap();
    let back = read_demo_file(&path).unwrap();
    assert_eq!(back, rec.follower);
    let set = load_demo_set(&path, AgentKind::Follower).unwrap();
    assert_eq!(set.provenance(), Provenance::ExpertSuboptimal);
    assert_eq!(set, rec.demo_set(AgentKind::Follower).unwrap());
    assert!(load_demo_set(&path, AgentKind::Leader).is_err());
    assert!(!d.path().join("follower.tmp").exists());
}

#[test]
fn truncated_demo_file_reports_the_line() {
    let task = Task::resolve("task1").unwrap();
    let rec = record_demos(&task, Quality::Optimal, 1, 0, Execution::Sequential).unwrap();
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("leader.jsonl");
    write_demo_file(&path, &rec.leader).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() - 20]).unwrap();
    let err = read_demo_file(&path).unwrap_err().to_string();
    assert!(err.contains(":2"), "{err}");
}

#[test]
fn replay_draws_every_pose_of_the_rollout() {
    let task = Task::resolve("task2").unwrap();
    let mut l = ScriptedController::for_episode(AgentKind::Leader, Quality::Optimal, 3, 0);
    let mut f = ScriptedController::for_episode(AgentKind::Follower, Quality::Optimal, 3, 0);
    let mut rng = episode_rng(3, 0);
    let r = rollout(&task, &mut l, &mut f, 0, &mut rng).unwrap();
    assert!(r.path.len() > 100);
    let svg = render_svg(&task, &layers_from_path(&r.path, ""));
    let paths: Vec<&str> = svg.lines().filter(|l| l.contains("class=\"path\"")).collect();
    assert_eq!(paths.len(), 2);
    for (line, leader) in paths.iter().zip([true, false]) {
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let pts: Vec<(f64, f64)> = pts
            .split_whitespace()
            .map(|s| {
                let (x, y) = s.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect();
        assert_eq!(pts.len(), r.path.len());
        let world: Vec<(f64, f64)> =
            r.path.iter().map(|(l, f)| if leader { (l.x, l.y) } else { (f.x, f.y) }).collect();
        // the drawing is world space scaled, shifted and flipped vertically
        let n = world.len() - 1;
        let scale = (pts[n].0 - pts[0].0) / (world[n].0 - world[0].0);
        assert!(scale > 0.0);
        for (s, w) in pts.iter().zip(&world) {
            assert!((s.0 - pts[0].0 - scale * (w.0 - world[0].0)).abs() < 0.011);
            assert!((s.1 - pts[0].1 + scale * (w.1 - world[0].1)).abs() < 0.011);
        }
    }
}
