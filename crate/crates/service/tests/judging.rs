mod common;

use common::short_session;
use magaisil_core::algo::{Mode, Provenance};
use magaisil_core::world::Task;
use magaisil_service::{run_session, JudgeKind, SharedState};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

#[test]
fn unanswered_trajectories_are_rejected_after_the_timeout() {
    let d = tempfile::tempdir().unwrap();
    let mut c = short_session(d.path(), Mode::Magaisil, 2);
    c.judge = JudgeKind::Human;
    c.serve = true;
    c.judgment_timeout_secs = 0.05;
    let state = SharedState::new(c.clone(), Task::resolve("task1").unwrap());
    run_session(&c, &state).unwrap();
    let g = state.lock();
    assert_eq!(g.metrics.len(), 4);
    assert!(g.metrics.iter().all(|r| r.judged && r.timed_out && !r.accepted));
    assert!(g.pending.is_empty());
    // a late verdict is a conflict
    let late = *g.decided.iter().next().unwrap();
    drop(g);
    assert!(state.submit_judgment(late, true).is_err());
}

#[test]
fn verdicts_from_the_api_reach_the_learner() {
    let d = tempfile::tempdir().unwrap();
    let mut c = short_session(d.path(), Mode::Magaisil, 6);
    c.judge = JudgeKind::Human;
    c.serve = true;
    c.judgment_timeout_secs = 30.0;
    c.train.pool_capacity_pairs = 100;
    let state = SharedState::new(c.clone(), Task::resolve("task1").unwrap());
    let done = Arc::new(AtomicBool::new(false));
    let judge = {
        let state = state.clone();
        let done = done.clone();
        std::thread::spawn(move || {
            let mut n = 0;
            while !done.load(Ordering::SeqCst) {
                let ids: Vec<u64> = state.lock().pending.keys().copied().collect();
                for id in ids {
                    // accept everything; a second verdict must conflict
                    state.submit_judgment(id, true).unwrap();
                    assert!(state.submit_judgment(id, false).is_err());
                    n += 1;
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            n
        })
    };
    run_session(&c, &state).unwrap();
    done.store(true, Ordering::SeqCst);
    assert_eq!(judge.join().unwrap(), 12);
    let g = state.lock();
    assert!(g.metrics.iter().all(|r| r.judged && r.accepted && !r.timed_out));
    // accepted episodes add up past the pool capacity within a few episodes
    assert!(g.metrics.iter().any(|r| r.replaced));
    assert!(g.status.agents.iter().all(|a| a.demo_provenance == Provenance::SelfGenerated));
}
