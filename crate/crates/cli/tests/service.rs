mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cmdtriage_cli::serve::{router, AppState};
use cmdtriage_cli::LoadedConfig;
use cmdtriage_core::embed::load_table;
use cmdtriage_core::gateway::{MockBackend, ScriptedRule};
use cmdtriage_core::prompt::load_context_set;
use cmdtriage_core::triage::{TriageConfig, TriagePipeline};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (AppState, Router) {
    let loaded = LoadedConfig::load(common::engine_config()).unwrap();
    let state = AppState::new(loaded.pipeline().unwrap(), loaded.config.triage.clone());
    (state.clone(), router(state))
}

fn tabletop_scene() -> Value {
    serde_json::from_str(&std::fs::read_to_string(common::data("scenes/tabletop.json")).unwrap()).unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router) -> String {
    let (status, v) = call(app, Method::POST, "/sessions", Some(json!({ "scene": tabletop_scene() }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn scripted_conversation() {
    let (_, app) = app();
    let id = create(&app).await;

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/answer"), Some(json!({"answer": "x"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "no_pending_question");

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(json!({"goal": "stack all blocks"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["label"], "ambiguous");
    assert_eq!(v["status"], "open");
    let question = v["question"].as_str().unwrap();
    assert_eq!(v["pending_question"], question);
    assert!(v["sigma"]["value"].as_f64().unwrap() > v["epsilon"].as_f64().unwrap());
    assert!(v["feasibility"]["feasible"].as_bool().unwrap());
    assert!(!v["explanation"].as_str().unwrap().is_empty());

    // a new command while a question is pending is refused
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(json!({"goal": "stack all blocks"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "awaiting_answer");

    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/answer"),
        Some(json!({"answer": "the top right corner"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["label"], "clear");
    assert_eq!(v["status"], "resolved");
    assert_eq!(v["rounds_used"], 1);
    assert!(v["pending_question"].is_null());
    assert_eq!(v["skill"]["calls"][1]["args"], json!(["red block", "top right corner"]));

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/answer"), Some(json!({"answer": "again"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "no_pending_question");

    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["dialogue"]["status"], "resolved");
    assert_eq!(v["dialogue"]["history"][0]["question"], question);
    assert_eq!(v["last_result"]["label"], "clear");
    assert_eq!(v["scene"]["objects"][0]["name"], "red block");

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "session_not_found");
}

#[tokio::test]
async fn clear_and_infeasible_commands() {
    let (_, app) = app();
    let id = create(&app).await;
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/command"),
        Some(json!({"goal": "pick the red block and put on the blue bowl"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["label"], "clear");
    assert_eq!(v["status"], "resolved");

    let kitchen: Value =
        serde_json::from_str(&std::fs::read_to_string(common::data("scenes/kitchen.json")).unwrap()).unwrap();
    // bare scene bodies are accepted too
    let (status, v) = call(&app, Method::POST, "/sessions", Some(kitchen)).await;
    assert_eq!(status, StatusCode::CREATED);
    let kitchen_id = v["session_id"].as_str().unwrap().to_string();
    assert_ne!(kitchen_id, id);
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{kitchen_id}/command"),
        Some(json!({"goal": "I want to go for a walk"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["label"], "infeasible");
    assert_eq!(v["status"], "abandoned");
    assert!(v["question"].is_null());
}

#[tokio::test]
async fn malformed_requests() {
    let (_, app) = app();
    let (status, v) = call(&app, Method::POST, "/sessions", Some(json!({"scene": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_request");
    assert!(v["message"].is_string());

    let mut scene = tabletop_scene();
    scene["action_set"] = json!([]);
    let (status, v) = call(&app, Method::POST, "/sessions", Some(json!({ "scene": scene }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "invalid_scene");

    let id = create(&app).await;
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(json!({"text": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_request");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(json!({"goal": "  "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = call(&app, Method::POST, "/sessions/nope/command", Some(json!({"goal": "x"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "session_not_found");
    let (status, v) = call(&app, Method::GET, "/elsewhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
}

#[tokio::test]
async fn backend_failures_are_502() {
    let (_, app) = app();
    let id = create(&app).await;
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(json!({"goal": "juggle"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["code"], "backend_error");
}

fn slow_state() -> AppState {
    let rules = vec![ScriptedRule::new("robot:", vec!["robot.pick_and_place(red block, blue bowl)".into()]).with_delay(150)];
    let backend = Arc::new(MockBackend::new(rules, 0).unwrap());
    let table = Arc::new(load_table(common::data("embeddings.txt")).unwrap());
    let contexts = load_context_set(common::data("contexts.json")).unwrap();
    let config = TriageConfig {
        epsilon: 0.1,
        h: 2,
        k: 1,
        ..TriageConfig::default()
    };
    AppState::new(TriagePipeline::new(backend, table, contexts), config)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn one_mutation_per_session_at_a_time() {
    let app = router(slow_state());
    let id = create(&app).await;
    let other = create(&app).await;
    let uri = format!("/sessions/{id}/command");
    let first = {
        let app = app.clone();
        let uri = uri.clone();
        tokio::spawn(async move { call(&app, Method::POST, &uri, Some(json!({"goal": "put the red block in the blue bowl"}))).await })
    };
    tokio::time::sleep(Duration::from_millis(60)).await;
    let (status, v) = call(&app, Method::POST, &uri, Some(json!({"goal": "put the red block in the blue bowl"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "session_busy");

    // other sessions are unaffected
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{other}/command"),
        Some(json!({"goal": "put the red block in the blue bowl"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");

    let (status, v) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["label"], "clear");
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let loaded = LoadedConfig::load(common::engine_config()).unwrap();
    let state = AppState::with_idle_timeout(loaded.pipeline().unwrap(), loaded.config.triage.clone(), Duration::ZERO);
    let app = router(state.clone());
    create(&app).await;
    create(&app).await;
    assert_eq!(state.session_count(), 2);
    tokio::time::sleep(Duration::from_millis(5)).await;
    assert_eq!(state.evict_idle(), 2);
    assert_eq!(state.session_count(), 0);

    let (fresh, app) = self::app();
    create(&app).await;
    assert_eq!(fresh.evict_idle(), 0);
    assert_eq!(fresh.session_count(), 1);
}
