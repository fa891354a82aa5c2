use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use opaque_core::config::ExperimentConfig;
use opaque_core::envs::{EnvConfig, Line1DParams, TowerParams};
use opaque_games_cli::{router, AppState};

fn app(dir: &tempfile::TempDir) -> Router {
    let mut cfg = ExperimentConfig::new(EnvConfig::Line1d(Line1DParams::worked_example()));
    cfg.service.envs = vec![cfg.env.clone(), EnvConfig::Tower(TowerParams::default())];
    cfg.service.log_path = dir.path().join("log.jsonl");
    router(Arc::new(AppState::from_config(&cfg).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn start(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn play(app: &Router, id: &str, actions: &[&str]) -> Vec<String> {
    let mut robot = vec![];
    for a in actions {
        let (status, v) = call(app, "POST", &format!("/sessions/{id}/action"), Some(json!({"human_action": a}))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        robot.push(v["robot_action"].as_str().unwrap().to_string());
    }
    robot
}

#[tokio::test]
async fn envs_lists_menus() {
    let dir = tempfile::tempdir().unwrap();
    let (status, v) = call(&app(&dir), "GET", "/envs", None).await;
    assert_eq!(status, StatusCode::OK);
    let envs = v["envs"].as_array().unwrap();
    assert_eq!(envs[0]["id"], "line1d");
    assert_eq!(envs[0]["human_actions"], json!(["-0.2", "0", "+0.2"]));
    assert_eq!(envs[1]["id"], "tower");
}

#[tokio::test]
async fn create_hides_the_type() {
    let dir = tempfile::tempdir().unwrap();
    let (status, v) = call(&app(&dir), "POST", "/sessions", Some(json!({"env": "line1d"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["horizon"], 5);
    assert_eq!(v["action_menu"], json!(["-0.2", "0", "+0.2"]));
    assert!(v.get("true_type").is_none());
    assert_eq!(v["robot_types"].as_array().unwrap().len(), 2);
    assert_eq!(v["state"]["kind"], "line");
    assert_eq!(v["state"]["position"], 0.6);
}

#[tokio::test]
async fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, v) = call(&app, "POST", "/sessions/nope/action", Some(json!({"human_action": "0"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");

    let tower = start(&app, json!({"env": "tower"})).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{tower}/action"), Some(json!({"human_action": "left"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"env": "moon"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let id = start(&app, json!({"env": "line1d"})).await;
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let guess = json!({"type_guess": "capable", "preference": 3});
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/guess"), Some(guess.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({"human_action": "0", "t": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    play(&app, &id, &["0"; 5]).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({"human_action": "0"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) =
        call(&app, "POST", &format!("/sessions/{id}/guess"), Some(json!({"type_guess": "capable", "preference": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/guess"), Some(guess.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["correct"], v["true_type"] == "capable");
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/guess"), Some(guess)).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn rational_opaque_session_scores_one_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let id = start(&app, json!({"env": "line1d", "force_type": "confused"})).await;
    assert_eq!(play(&app, &id, &["-0.2"; 5]).await, vec!["-0.1"; 5]);
    call(&app, "POST", &format!("/sessions/{id}/guess"), Some(json!({"type_guess": "confused", "preference": 7}))).await;
    let (status, record) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(record["score"], 1.0);
    assert_eq!(record["true_type"], "confused");
    assert_eq!(record["preference"], 7);
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let logged: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(logged["transcript"], record["transcript"]);
}

#[tokio::test]
async fn transparent_sessions_differ_by_type() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let mut seqs = vec![];
    for ty in ["capable", "confused"] {
        let id = start(&app, json!({"env": "line1d", "algorithm": "transparent", "force_type": ty})).await;
        seqs.push(play(&app, &id, &["-0.2"; 5]).await);
    }
    assert_ne!(seqs[0], seqs[1]);
}

#[tokio::test]
async fn params_override_solves_a_new_table() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let body = json!({"env": "line1d", "params": {"human_actions": [-0.2, 0.0, 0.2], "horizon": 2}});
    let (status, v) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["horizon"], 2);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"env": "line1d", "params": {"step": "x"}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn interleaved_sessions_match_serial_play() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let script = ["+0.2", "+0.2", "0", "-0.2", "+0.2"];
    let serial = {
        let id = start(&app, json!({"env": "line1d", "force_type": "capable"})).await;
        play(&app, &id, &script).await
    };
    let ids = [
        start(&app, json!({"env": "line1d", "force_type": "capable"})).await,
        start(&app, json!({"env": "line1d", "force_type": "capable"})).await,
    ];
    let mut robot = [vec![], vec![]];
    for a in script {
        for (k, id) in ids.iter().enumerate() {
            robot[k].extend(play(&app, id, &[a]).await);
        }
    }
    assert_eq!(robot[0], serial);
    assert_eq!(robot[1], serial);
}
