#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde_json::{json, Value};
use tokroute_cli::service::{app, AppState};
use tokroute_cli::store::SessionStore;
use tokroute_core::artifact::ArtifactStore;
use tokroute_core::registry::{
    BackendResponse, ExpertBackend, ExpertFailure, ExpertRegistry, ExpertRequest,
};

pub const SEED: u64 = 42;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Wraps a backend and counts how often it runs.
pub struct Counting {
    inner: Arc<dyn ExpertBackend>,
    pub calls: Arc<AtomicUsize>,
}

#[async_trait]
impl ExpertBackend for Counting {
    async fn execute(&self, req: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.execute(req).await
    }
}

/// The default mock lineup with every backend counted.
pub fn counted_registry(seed: u64) -> (ExpertRegistry, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let base = ExpertRegistry::default_mock(seed);
    let mut reg = ExpertRegistry::new();
    for d in tokroute_core::registry::default_descriptors(seed) {
        let inner = base.resolve(*d.supported_kinds.iter().next().unwrap()).unwrap().backend.clone();
        let backend = Arc::new(Counting {
            inner,
            calls: calls.clone(),
        });
        reg.register_with_backend(d, backend).unwrap();
    }
    (reg, calls)
}

pub struct Server {
    pub base: String,
    pub calls: Arc<AtomicUsize>,
    pub client: reqwest::Client,
    _dir: tempfile::TempDir,
}

pub async fn start_server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let (registry, calls) = counted_registry(SEED);
    let sessions = SessionStore::open(dir.path().join("sessions")).unwrap();
    let artifacts = ArtifactStore::open(dir.path().join("artifacts")).unwrap();
    let state = Arc::new(AppState::new(registry, sessions, Some(artifacts)));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app(state)).await.unwrap();
    });
    Server {
        base: format!("http://{addr}"),
        calls,
        client: reqwest::Client::new(),
        _dir: dir,
    }
}

pub struct Case {
    pub name: &'static str,
    pub method: &'static str,
    pub path: &'static str,
    pub key: Option<&'static str>,
    /// Raw request body.
    pub body: String,
}

fn post(name: &'static str, path: &'static str, body: Value) -> Case {
    Case {
        name,
        method: "POST",
        path,
        key: None,
        body: body.to_string(),
    }
}

/// The golden cases, run in order against one server.
pub fn cases() -> Vec<Case> {
    let gen = "Here you go. <Gen>a lighthouse on a cliff at sunset</Gen>";
    let edit = "<Edit>add a flock of gulls</Edit><box>[0.1,0.05,0.6,0.35]</box>";
    vec![
        post("parse_ok", "/v1/parse", json!({"text": "Sure. <Seg>the dog</Seg><box>[0.1,0.2,0.5,0.9]</box>"})),
        post("parse_malformed_token", "/v1/parse", json!({"text": "<Gen>unterminated"})),
        Case {
            name: "parse_not_json",
            method: "POST",
            path: "/v1/parse",
            key: None,
            body: "text=hello".into(),
        },
        post("parse_missing_field", "/v1/parse", json!({"txt": "hello"})),
        post("route_ok", "/v1/route", json!({"session_id": "g", "text": gen})),
        post("route_missing_artifact", "/v1/route", json!({"session_id": "g", "text": edit})),
        post("route_missing_region", "/v1/route", json!({"session_id": "g", "text": "<Seg>the tower</Seg>"})),
        Case {
            name: "session_unknown",
            method: "GET",
            path: "/v1/sessions/g",
            key: None,
            body: String::new(),
        },
        Case {
            key: Some("k1"),
            ..post("execute_gen", "/v1/execute", json!({"session_id": "g", "text": gen}))
        },
        Case {
            key: Some("k1"),
            ..post("execute_gen_repeat", "/v1/execute", json!({"session_id": "g", "text": gen}))
        },
        Case {
            key: Some("k1"),
            ..post("execute_key_reused", "/v1/execute", json!({"session_id": "g", "text": edit}))
        },
        post(
            "execute_edit",
            "/v1/execute",
            json!({"session_id": "g", "text": edit, "idempotency_key": "k2"}),
        ),
        post("execute_text_only", "/v1/execute", json!({"session_id": "g", "text": "Anything else?"})),
        post("execute_empty_session", "/v1/execute", json!({"session_id": "", "text": "hi"})),
        post("execute_malformed_token", "/v1/execute", json!({"session_id": "g", "text": "<box>[0.1,0.1]</box>"})),
        Case {
            name: "session_after",
            method: "GET",
            path: "/v1/sessions/g",
            key: None,
            body: String::new(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub status: u16,
    pub body: Value,
}

impl Observed {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&json!({"status": self.status, "body": self.body})).unwrap() + "\n"
    }
}

pub async fn run_case(server: &Server, case: &Case) -> Observed {
    let url = format!("{}{}", server.base, case.path);
    let mut req = match case.method {
        "GET" => server.client.get(&url),
        _ => server
            .client
            .post(&url)
            .header("content-type", "application/json")
            .body(case.body.clone()),
    };
    if let Some(k) = case.key {
        req = req.header("Idempotency-Key", k);
    }
    let resp = req.send().await.unwrap();
    let status = resp.status().as_u16();
    let body: Value = resp.json().await.unwrap();
    Observed { status, body }
}

pub struct GoldenOutcome {
    pub name: &'static str,
    pub matched: bool,
    pub detail: String,
}

/// Runs every case and compares with the files under `tests/golden`.
/// With `UPDATE_GOLDEN=1` the files are rewritten instead.
pub async fn run_golden_suite() -> (Vec<GoldenOutcome>, Server) {
    let server = start_server().await;
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let mut out = Vec::new();
    for (i, case) in cases().iter().enumerate() {
        let observed = run_case(&server, case).await.to_json();
        let path = golden_dir().join(format!("{i:02}_{}.json", case.name));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &observed).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_default();
        let matched = expected == observed;
        out.push(GoldenOutcome {
            name: case.name,
            matched,
            detail: if matched {
                String::new()
            } else {
                format!("{} differs from response:\n{observed}", path.display())
            },
        });
    }
    (out, server)
}
