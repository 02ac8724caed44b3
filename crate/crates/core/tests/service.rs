//! HTTP endpoints of the console service, exercised over a real socket.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use mirrorsim::agents::{greedy_step, AgentHandle, AgentKind, HumanBridge};
use mirrorsim::episode::RecordOutcome;
use mirrorsim::generate::canonical_scene;
use mirrorsim::geometry::Action;
use mirrorsim::prompt::Level;
use mirrorsim::report::read_records;
use mirrorsim::run::{run_benchmark_with, DefaultAgentFactory, RunConfig, RECORDS_FILE};
use mirrorsim::service::{Service, ServiceConfig};

struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    fn new(addr: SocketAddr) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            base: format!("http://{addr}"),
        }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let resp = self
            .agent
            .get(format!("{}{path}", self.base))
            .call()
            .unwrap();
        let code = resp.status().as_u16();
        (code, resp.into_body().read_json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(&body)
            .unwrap();
        let code = resp.status().as_u16();
        (code, resp.into_body().read_json().unwrap_or(Value::Null))
    }

    fn wait_for(&self, path: &str, pred: impl Fn(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let (code, v) = self.get(path);
            if code == 200 && pred(&v) {
                return v;
            }
            assert!(
                Instant::now() < deadline,
                "timed out waiting on {path}: {v}"
            );
            std::thread::sleep(Duration::from_millis(10));
        }
    }
}

fn start(
    runs_dir: &std::path::Path,
) -> (tokio::runtime::Runtime, std::sync::Arc<HumanBridge>, Client) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let bridge = HumanBridge::new();
    let cfg = ServiceConfig {
        bind: SocketAddr::from(([127, 0, 0, 1], 0)),
        runs_dir: runs_dir.to_path_buf(),
        console_dir: None,
    };
    let service = rt.block_on(Service::bind(&cfg, bridge.clone())).unwrap();
    let client = Client::new(service.local_addr());
    rt.spawn(service.run());
    (rt, bridge, client)
}

#[test]
fn unknown_session_and_run_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let (_rt, _bridge, client) = start(dir.path());
    assert_eq!(client.get("/sessions"), (200, json!([])));
    assert_eq!(client.get("/session/nope/step").0, 404);
    assert_eq!(
        client
            .post("/session/nope/action", json!({"direction": "+X"}))
            .0,
        404
    );
    assert_eq!(client.get("/runs/missing/report").0, 404);
}

#[test]
fn human_episode_played_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (_rt, bridge, client) = start(dir.path());
    let spec = canonical_scene();
    let mut cfg = RunConfig {
        run_id: "human-run".into(),
        output_dir: dir.path().to_path_buf(),
        levels: vec![Level::L1],
        agents: vec![AgentHandle::new("person", AgentKind::Human)],
        ..RunConfig::default()
    };
    cfg.episode.render = mirrorsim::render::RenderConfig::with_size(128, 128);

    let runner = {
        let cfg = cfg.clone();
        let spec = spec.clone();
        std::thread::spawn(move || {
            let factory = DefaultAgentFactory::new(&cfg.agents).with_bridge(bridge);
            run_benchmark_with(&cfg, &[spec], &factory).unwrap()
        })
    };

    let session = "canonical.L1.person";
    let step_path = format!("/session/{session}/step");
    let action_path = format!("/session/{session}/action");
    let mut hand = spec.hand_init;
    let mut played = Vec::new();
    let mut first = true;
    loop {
        let view = client.wait_for(&step_path, |v| v["status"] != "waiting_for_sim");
        if view["status"] == "done" {
            break;
        }
        let step = view["step_index"].as_u64().unwrap();
        assert_eq!(step, played.len() as u64);
        assert!(view["prompt_text"]
            .as_str()
            .unwrap()
            .contains("a mirror is present in the environment"));
        assert!(!view["frame_png_base64"].as_str().unwrap().is_empty());
        if first {
            assert_eq!(
                client
                    .post(&action_path, json!({"direction": "sideways"}))
                    .0,
                400
            );
            let (code, v) = client.post(
                &action_path,
                json!({"direction": "+X", "step_index": step + 5}),
            );
            assert_eq!((code, &v["result"]), (409, &json!("stale")));
            first = false;
        }
        let action = greedy_step(hand, spec.mark_anchor);
        let (code, v) = client.post(
            &action_path,
            json!({"direction": action.to_string(), "step_index": step}),
        );
        assert_eq!((code, &v["result"]), (200, &json!("accepted")));
        // A second click for the same step never counts twice.
        let (code, v) = client.post(
            &action_path,
            json!({"direction": action.to_string(), "step_index": step}),
        );
        assert_eq!(code, 409, "{v}");
        played.push(action);
        hand = hand + action.displacement();
    }

    let manifest = runner.join().unwrap();
    assert_eq!(manifest.executed, 1);
    let records = read_records(&cfg.run_dir().join(RECORDS_FILE)).unwrap();
    assert_eq!(records.len(), 1);
    let rec = &records[0];
    assert_eq!(rec.outcome, RecordOutcome::Success);
    let recorded: Vec<Action> = rec.actions.iter().map(|a| a.unwrap()).collect();
    assert_eq!(recorded, played);
    assert_eq!(played.len() as u32, spec.initial_distance() - 1);

    let (code, sessions) = client.get("/sessions");
    assert_eq!(code, 200);
    assert_eq!(sessions[0]["session_id"], session);
    assert_eq!(sessions[0]["status"], "done");
    assert_eq!(
        client.post(&action_path, json!({"direction": "+X"})),
        (409, json!({"result": "done"}))
    );

    let (code, report) = client.get("/runs/human-run/report?levels=1&score=tsr");
    assert_eq!(code, 200, "{report}");
    assert_eq!(report["episodes"], 1);
    assert_eq!(report["per_level"][0]["rows"][0]["agent"], "person");
    assert_eq!(report["per_level"][0]["rows"][0]["overall"]["tsr"], 1.0);
    assert_eq!(client.get("/runs/human-run/report?levels=9").0, 400);
}

#[test]
fn malformed_run_file_is_422() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("broken")).unwrap();
    std::fs::write(dir.path().join("broken").join(RECORDS_FILE), "{not json}\n").unwrap();
    let (_rt, _bridge, client) = start(dir.path());
    assert_eq!(client.get("/runs/broken/report").0, 422);
}

#[test]
fn static_console_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let console = tempfile::tempdir().unwrap();
    std::fs::write(console.path().join("index.html"), "<html>console</html>").unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let cfg = ServiceConfig {
        bind: SocketAddr::from(([127, 0, 0, 1], 0)),
        runs_dir: dir.path().to_path_buf(),
        console_dir: Some(console.path().to_path_buf()),
    };
    let service = rt
        .block_on(Service::bind(&cfg, HumanBridge::new()))
        .unwrap();
    let base = format!("http://{}", service.local_addr());
    rt.spawn(service.run());
    let body = ureq::get(format!("{base}/index.html"))
        .call()
        .unwrap()
        .into_body()
        .read_to_string()
        .unwrap();
    assert_eq!(body, "<html>console</html>");
}
