//! HTTP service.
//!
//! | method | path                 | body                                      |
//! |--------|----------------------|-------------------------------------------|
//! | POST   | `/v1/parse`          | `{"text"}`                                |
//! | POST   | `/v1/route`          | `{"session_id", "text"}`                  |
//! | POST   | `/v1/execute`        | `{"session_id", "text", "idempotency_key"?}` |
//! | GET    | `/v1/sessions/{id}`  |                                           |
//!
//! Errors are `{"error": code, "detail": ...}` with status 400 for bodies
//! that are not the expected JSON, 404 for unknown sessions, 422 for
//! malformed tokens and routing failures, and 502 when a remote expert
//! could not be reached. `/v1/execute` accepts the idempotency key either
//! in the body or in an `Idempotency-Key` header; a repeated key returns
//! the stored response without running anything. Executions on one session
//! are serialized; different sessions run concurrently.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokroute_core::artifact::{sha256_hex, ArtifactStore};
use tokroute_core::dispatch::dispatch_with_store;
use tokroute_core::protocol::{parse, ParsedMessage, Violation};
use tokroute_core::registry::{ExpertRegistry, FailureCode};
use tokroute_core::router::{route, RouteError};
use tokroute_core::session::{update_session, SessionContext};

use crate::config::EffectiveConfig;
use crate::replay::ReplayError;
use crate::store::{CachedResponse, SessionStore, StoreError};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

type Reply = (StatusCode, Json<Value>);

pub struct AppState {
    registry: ExpertRegistry,
    sessions: SessionStore,
    artifacts: Option<ArtifactStore>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(registry: ExpertRegistry, sessions: SessionStore, artifacts: Option<ArtifactStore>) -> Self {
        Self {
            registry,
            sessions,
            artifacts,
            locks: Mutex::new(HashMap::new()),
        }
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/parse", post(parse_handler))
        .route("/v1/route", post(route_handler))
        .route("/v1/execute", post(execute_handler))
        .route("/v1/sessions/{id}", get(session_handler))
        .with_state(state)
}

fn error(status: StatusCode, code: &str, detail: impl ToString) -> Reply {
    (status, Json(json!({"error": code, "detail": detail.to_string()})))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, Reply> {
    serde_json::from_slice(bytes).map_err(|e| error(StatusCode::BAD_REQUEST, "malformed_body", e))
}

fn store_error(e: StoreError) -> Reply {
    match e {
        StoreError::CorruptState { .. } => error(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_state", e),
        StoreError::Io(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "io_error", e),
    }
}

fn parse_text(text: &str) -> Result<ParsedMessage, Reply> {
    parse(text).map_err(|e| {
        let v = Violation::from(&e);
        (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": "malformed_token", "detail": e.to_string(), "violations": [v]})),
        )
    })
}

fn route_reply(e: RouteError) -> Reply {
    let err = crate::replay::route_error(&e);
    let mut v = json!({"error": err.code, "detail": err.detail});
    if !err.violations.is_empty() {
        v["violations"] = json!(err.violations);
    }
    (StatusCode::UNPROCESSABLE_ENTITY, Json(v))
}

fn check_session_id(id: &str) -> Result<(), Reply> {
    if id.is_empty() {
        return Err(error(StatusCode::BAD_REQUEST, "malformed_body", "session_id must not be empty"));
    }
    Ok(())
}

#[derive(Deserialize)]
struct ParseBody {
    text: String,
}

async fn parse_handler(body_bytes: Bytes) -> Reply {
    let req: ParseBody = match body(&body_bytes) {
        Ok(r) => r,
        Err(e) => return e,
    };
    match parse_text(&req.text) {
        Ok(msg) => (StatusCode::OK, Json(json!(msg))),
        Err(e) => e,
    }
}

#[derive(Deserialize)]
struct RouteBody {
    session_id: String,
    text: String,
}

fn load_or_new(state: &AppState, id: &str) -> Result<SessionContext, Reply> {
    Ok(state
        .sessions
        .load(id)
        .map_err(store_error)?
        .unwrap_or_else(|| SessionContext::new(id)))
}

async fn route_handler(State(state): State<Arc<AppState>>, body_bytes: Bytes) -> Reply {
    let run = || -> Result<Reply, Reply> {
        let req: RouteBody = body(&body_bytes)?;
        check_session_id(&req.session_id)?;
        let ctx = load_or_new(&state, &req.session_id)?;
        let msg = parse_text(&req.text)?;
        let plan = route(&msg, &ctx).map_err(route_reply)?;
        Ok((StatusCode::OK, Json(json!(plan))))
    };
    run().unwrap_or_else(|e| e)
}

#[derive(Deserialize)]
struct ExecuteBody {
    session_id: String,
    text: String,
    #[serde(default)]
    idempotency_key: Option<String>,
}

async fn execute_handler(State(state): State<Arc<AppState>>, headers: HeaderMap, body_bytes: Bytes) -> Reply {
    let req: ExecuteBody = match body(&body_bytes) {
        Ok(r) => r,
        Err(e) => return e,
    };
    if let Err(e) = check_session_id(&req.session_id) {
        return e;
    }
    let header_key = match headers.get(IDEMPOTENCY_HEADER).map(|v| v.to_str()) {
        None => None,
        Some(Ok(k)) => Some(k.to_string()),
        Some(Err(_)) => return error(StatusCode::BAD_REQUEST, "malformed_body", "idempotency key is not text"),
    };
    let key = match (header_key, req.idempotency_key.clone()) {
        (Some(h), Some(b)) if h != b => {
            return error(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                "header and body idempotency keys differ",
            )
        }
        (h, b) => h.or(b),
    };
    let request_hash = sha256_hex(json!([req.session_id, req.text]).to_string().as_bytes());

    let lock = state.session_lock(&req.session_id);
    let _guard = lock.lock().await;

    if let Some(k) = &key {
        match state.sessions.cached_response(&req.session_id, k) {
            Ok(Some(cached)) if cached.request_hash == request_hash => {
                let status = StatusCode::from_u16(cached.status).unwrap_or(StatusCode::OK);
                return (status, Json(cached.body));
            }
            Ok(Some(_)) => {
                return error(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "idempotency_key_reused",
                    "key was already used for a different request",
                )
            }
            Ok(None) => {}
            Err(e) => return store_error(e),
        }
    }

    let reply = execute(&state, &req).await;
    let (status, Json(value)) = &reply;
    let cacheable = *status == StatusCode::OK || *status == StatusCode::UNPROCESSABLE_ENTITY;
    if let (Some(k), true) = (&key, cacheable) {
        let cached = CachedResponse {
            request_hash,
            status: status.as_u16(),
            body: value.clone(),
        };
        if let Err(e) = state.sessions.cache_response(&req.session_id, k, &cached) {
            return store_error(e);
        }
    }
    reply
}

async fn execute(state: &AppState, req: &ExecuteBody) -> Reply {
    let ctx = match load_or_new(state, &req.session_id) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let plan = match parse_text(&req.text).and_then(|msg| route(&msg, &ctx).map_err(route_reply)) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let result = match dispatch_with_store(&plan, &state.registry, state.artifacts.as_ref()).await {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "no_expert_registered", e),
    };
    if result
        .outcomes
        .iter()
        .any(|o| o.failure_code() == Some(FailureCode::RemoteTimeout))
    {
        // The turn is not committed, so the client can retry it.
        return (
            StatusCode::BAD_GATEWAY,
            Json(json!({
                "error": "remote_transport",
                "detail": "a remote expert could not be reached",
                "plan": plan,
                "result": result,
            })),
        );
    }
    let next = match update_session(&ctx, &req.text, &plan, &result) {
        Ok(n) => n,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "session_mismatch", e),
    };
    if let Err(e) = state.sessions.save(&next) {
        return store_error(e);
    }
    (
        StatusCode::OK,
        Json(json!({
            "session_id": next.session_id,
            "turn_index": next.turn_index,
            "plan": plan,
            "result": result,
        })),
    )
}

async fn session_handler(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    match state.sessions.load(&id) {
        Ok(Some(ctx)) => (StatusCode::OK, Json(json!(ctx))),
        Ok(None) => error(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}")),
        Err(e) => store_error(e),
    }
}

/// Builds the service state for `config`: its registry, the session store
/// under the state directory, and the artifact store beside it.
pub fn state_for(config: &EffectiveConfig) -> Result<AppState, ReplayError> {
    let registry = config.build_registry()?;
    let sessions = SessionStore::open(config.state_dir.join("sessions")).map_err(|e| match e {
        StoreError::Io(io) => ReplayError::Store(tokroute_core::artifact::StoreError::Io(io)),
        other => ReplayError::Store(tokroute_core::artifact::StoreError::Io(std::io::Error::other(other))),
    })?;
    let artifacts = ArtifactStore::open(config.artifact_dir())?;
    Ok(AppState::new(registry, sessions, Some(artifacts)))
}

/// Serves until ctrl-c.
pub async fn serve(config: &EffectiveConfig) -> Result<(), Box<dyn std::error::Error>> {
    let state = Arc::new(state_for(config)?);
    let addr: SocketAddr = config.listen.parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
