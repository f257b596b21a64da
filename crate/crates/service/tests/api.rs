use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use magaisil_core::algo::{AgentKind, DemoSummary, Provenance};
use magaisil_core::world::Task;
use magaisil_service::state::Event;
use magaisil_service::{router, serve_api, MetricsRecord, PendingJudgment, SessionConfig, SharedState, TaskGeometry};
use std::io::{Read, Write};
use tower::ServiceExt;

fn state(task: &str) -> SharedState {
    SharedState::new(SessionConfig::default(), Task::resolve(task).unwrap())
}

fn pending(id: u64) -> PendingJudgment {
    PendingJudgment {
        trajectory_id: id,
        agent: AgentKind::Leader,
        episode: 0,
        leader_path: vec![[0.0, 0.0], [1.0, 0.0]],
        follower_path: vec![[-5.0, 0.0], [-4.0, 0.0]],
        eval_rewards: vec![0.5, 0.7],
        mean_eval_reward: 0.6,
        pairs: 2,
        term_reason: "max_steps".into(),
        demos: DemoSummary { provenance: Provenance::ExpertOptimal, episodes: 10, pairs: 2000, mean_eval_reward: 0.8 },
        created_at: 0.0,
    }
}

fn record(episode: u64, agent: AgentKind) -> MetricsRecord {
    MetricsRecord {
        episode,
        agent,
        steps: 10,
        term_reason: "collision".into(),
        mean_disc_reward: 0.1,
        mean_eval_reward: 0.2,
        success: false,
        judged: false,
        accepted: false,
        timed_out: false,
        pool_pairs: 0,
        demo_provenance: Provenance::ExpertOptimal,
        demo_mean_eval_reward: 0.8,
        replaced: false,
        progress: 3.0,
        disc_loss: -1.3,
        policy_entropy: 1.6,
        fault: None,
    }
}

async fn call(s: &SharedState, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = router(s.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_judgment(id: u64, accept: bool) -> Request<Body> {
    Request::post("/api/judgment")
        .header("content-type", "application/json")
        .body(Body::from(serde_json::json!({ "trajectory_id": id, "accept": accept }).to_string()))
        .unwrap()
}

#[tokio::test]
async fn status_reports_phase_and_config() {
    let s = state("task1");
    let (code, body) = call(&s, get("/api/status")).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body["phase"], "starting");
    assert_eq!(body["config"]["mode"], "magail");
    assert_eq!(body["episodes_done"], 0);
}

#[tokio::test]
async fn task_geometry_has_walls_and_obstacles() {
    let s = state("task2");
    let (code, body) = call(&s, get("/api/task")).await;
    assert_eq!(code, StatusCode::OK);
    let g: TaskGeometry = serde_json::from_value(body).unwrap();
    assert_eq!(g.id, "task2");
    assert_eq!(g.obstacles.len(), 4);
    assert_eq!(g.left_wall.len(), g.right_wall.len());
    assert!(g.centerline.len() >= 2);
    assert!(g.width > 0.0 && g.goal_progress > 0.0);
}

#[tokio::test]
async fn judgments_resolve_once_then_conflict() {
    let s = state("task1");
    s.lock().pending.insert(7, pending(7));
    let (code, body) = call(&s, get("/api/pending")).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body.as_array().unwrap().len(), 1);
    assert_eq!(body[0]["trajectory_id"], 7);
    assert_eq!(body[0]["demos"]["provenance"], serde_json::json!(Provenance::ExpertOptimal));

    let (code, _) = call(&s, post_judgment(7, true)).await;
    assert_eq!(code, StatusCode::OK);
    let (code, body) = call(&s, post_judgment(7, false)).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert!(body["error"].is_string());
    let (code, _) = call(&s, post_judgment(8, true)).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let (_, body) = call(&s, get("/api/pending")).await;
    assert!(body.as_array().unwrap().is_empty());
}

#[tokio::test]
async fn malformed_judgment_is_a_client_error() {
    let s = state("task1");
    let req = Request::post("/api/judgment")
        .header("content-type", "application/json")
        .body(Body::from("{\"trajectory_id\": \"x\"}"))
        .unwrap();
    let resp = router(s).oneshot(req).await.unwrap();
    assert!(resp.status().is_client_error());
}

#[tokio::test]
async fn metrics_can_be_polled_incrementally() {
    let s = state("task1");
    {
        let mut g = s.lock();
        for ep in 0..3 {
            g.metrics.push(record(ep, AgentKind::Leader));
            g.metrics.push(record(ep, AgentKind::Follower));
        }
    }
    let (_, all) = call(&s, get("/api/metrics")).await;
    assert_eq!(all.as_array().unwrap().len(), 6);
    let (_, tail) = call(&s, get("/api/metrics?after=1")).await;
    let tail = tail.as_array().unwrap();
    assert_eq!(tail.len(), 2);
    assert!(tail.iter().all(|r| r["episode"] == 2));
    let back: Vec<MetricsRecord> = serde_json::from_value(all).unwrap();
    assert_eq!(back[5], record(2, AgentKind::Follower));
}

#[tokio::test]
async fn events_stream_episodes_and_replacements() {
    let s = state("task1");
    let resp = router(s.clone()).oneshot(get("/api/events")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = resp.into_body();
    let mut r = record(4, AgentKind::Follower);
    s.publish(Event::Episode(r.clone()));
    r.replaced = true;
    s.publish(Event::Replacement(r.clone()));
    let mut text = String::new();
    while !(text.contains("event: episode") && text.contains("event: replacement")) {
        let frame = body.frame().await.unwrap().unwrap();
        if let Ok(d) = frame.into_data() {
            text.push_str(std::str::from_utf8(&d).unwrap());
        }
    }
    let data: Vec<MetricsRecord> = text
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(data.len(), 2);
    assert!(!data[0].replaced && data[1].replaced);
}

#[test]
fn server_answers_over_tcp_and_stops() {
    let s = state("task1");
    let handle = serve_api(s, "127.0.0.1", 0).unwrap();
    let mut conn = std::net::TcpStream::connect(handle.addr).unwrap();
    write!(conn, "GET /api/status HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"phase\""));
    let addr = handle.addr;
    handle.stop();
    assert!(std::net::TcpStream::connect(addr).is_err());
}

#[test]
fn busy_port_is_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    assert!(serve_api(state("task1"), "127.0.0.1", port).is_err());
}
