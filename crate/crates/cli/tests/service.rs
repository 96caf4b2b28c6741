mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;

use common::{run_case, start_server, Case};
use serde_json::json;
use tokroute_cli::service::{app, AppState};
use tokroute_cli::store::SessionStore;
use tokroute_core::protocol::TaskKind;
use tokroute_core::registry::{BackendSpec, ExpertDescriptor, ExpertRegistry};

#[tokio::test]
async fn golden_responses() {
    let (outcomes, _server) = common::run_golden_suite().await;
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.matched).map(|o| &o.detail).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

fn execute(key: Option<&'static str>, text: &str) -> Case {
    Case {
        name: "execute",
        method: "POST",
        path: "/v1/execute",
        key,
        body: json!({"session_id": "s", "text": text}).to_string(),
    }
}

#[tokio::test]
async fn repeated_key_runs_experts_once() {
    let server = start_server().await;
    let case = execute(Some("once"), "<Gen>a bowl of fruit</Gen> and <AudioGen>birdsong</AudioGen>");
    let first = run_case(&server, &case).await;
    assert_eq!(first.status, 200);
    assert_eq!(server.calls.load(Ordering::SeqCst), 2);
    for _ in 0..5 {
        assert_eq!(run_case(&server, &case).await, first);
    }
    assert_eq!(server.calls.load(Ordering::SeqCst), 2);
    let session = run_case(
        &server,
        &Case {
            name: "get",
            method: "GET",
            path: "/v1/sessions/s",
            key: None,
            body: String::new(),
        },
    )
    .await;
    assert_eq!(session.body["turn_index"], 1);
}

#[tokio::test]
async fn concurrent_repeats_of_one_key_run_once() {
    let server = Arc::new(start_server().await);
    let case = Arc::new(execute(Some("race"), "<Gen>a toy boat</Gen>"));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (server, case) = (server.clone(), case.clone());
            tokio::spawn(async move { run_case(&server, &case).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(server.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn unkeyed_executes_advance_the_session() {
    let server = start_server().await;
    let case = execute(None, "<Gen>a toy boat</Gen>");
    let a = run_case(&server, &case).await;
    let b = run_case(&server, &case).await;
    assert_eq!((a.body["turn_index"].clone(), b.body["turn_index"].clone()), (json!(1), json!(2)));
    assert_eq!(server.calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn unreachable_remote_is_502_and_not_committed() {
    let dir = tempfile::tempdir().unwrap();
    // Bind then drop, so nothing listens on the port.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut registry = ExpertRegistry::new();
    registry
        .register(ExpertDescriptor {
            name: "remote-gen".into(),
            supported_kinds: [TaskKind::ImageGen].into(),
            backend: BackendSpec::Remote {
                endpoint: format!("http://127.0.0.1:{port}/run"),
                timeout_ms: 500,
                max_retries: 1,
                backoff_ms: 1,
            },
        })
        .unwrap();
    let state = AppState::new(registry, SessionStore::open(dir.path()).unwrap(), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app(Arc::new(state))).await.unwrap() });

    let client = reqwest::Client::new();
    let resp = client
        .post(format!("{base}/v1/execute"))
        .header("Idempotency-Key", "r")
        .body(json!({"session_id": "s", "text": "<Gen>x</Gen>"}).to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 502);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "remote_transport");
    assert_eq!(body["result"]["outcomes"][0]["code"], "remote_timeout");
    let get = client.get(format!("{base}/v1/sessions/s")).send().await.unwrap();
    assert_eq!(get.status().as_u16(), 404);
}
