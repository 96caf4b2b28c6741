//! HTTP client for experts running as separate services.
//!
//! `POST {endpoint}` with a JSON [`RemoteRequest`] and an `Idempotency-Key`
//! header carrying the same key as the body. A 2xx reply carries a
//! [`RemoteResponse`]. Transport failures (connect errors, timeouts, broken
//! bodies) are retried with exponential backoff; any non-2xx status is the
//! expert's own answer and is never retried.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendResponse, ExpertBackend, ExpertFailure, ExpertOutput, ExpertRequest, FailureCode, OutputPayload};
use crate::artifact::ArtifactRef;
use crate::protocol::{Region, TaskKind};

pub const IDEMPOTENCY_HEADER: &str = "Idempotency-Key";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub kind: TaskKind,
    pub prompt: String,
    pub regions: Vec<Region>,
    pub input_artifact_ids: Vec<ArtifactRef>,
    pub idempotency_key: String,
}

impl From<&ExpertRequest> for RemoteRequest {
    fn from(req: &ExpertRequest) -> Self {
        Self {
            kind: req.kind,
            prompt: req.prompt.clone(),
            regions: req.regions.clone(),
            input_artifact_ids: req.input_artifacts.clone(),
            idempotency_key: req.idempotency_key.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub output: OutputPayload,
    /// Base64 artifact bytes, when the expert returns them inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_data: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    name: String,
    endpoint: String,
    client: reqwest::Client,
    max_retries: u32,
    backoff: Duration,
}

enum Attempt {
    Done(Result<BackendResponse, ExpertFailure>),
    Transport(String),
}

impl RemoteBackend {
    pub fn new(
        name: impl Into<String>,
        endpoint: &str,
        timeout: Duration,
        max_retries: u32,
        backoff: Duration,
    ) -> Result<Self, String> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(format!("endpoint {endpoint:?} is not an http(s) URL"));
        }
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            name: name.into(),
            endpoint: endpoint.to_string(),
            client,
            max_retries,
            backoff,
        })
    }

    async fn attempt(&self, body: &RemoteRequest) -> Attempt {
        let sent = self
            .client
            .post(&self.endpoint)
            .header(IDEMPOTENCY_HEADER, &body.idempotency_key)
            .json(body)
            .send()
            .await;
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Transport(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => return Attempt::Transport(e.to_string()),
        };
        if !status.is_success() {
            return Attempt::Done(Err(ExpertFailure::new(
                FailureCode::ExpertError,
                format!("HTTP {}: {}", status.as_u16(), text.trim()),
            )));
        }
        Attempt::Done(self.decode(&text))
    }

    fn decode(&self, text: &str) -> Result<BackendResponse, ExpertFailure> {
        let parsed: RemoteResponse = serde_json::from_str(text)
            .map_err(|e| ExpertFailure::new(FailureCode::InvalidOutput, format!("bad response body: {e}")))?;
        let data = parsed
            .artifact_data
            .map(|b64| base64::engine::general_purpose::STANDARD.decode(b64))
            .transpose()
            .map_err(|e| ExpertFailure::new(FailureCode::InvalidOutput, format!("bad artifact_data: {e}")))?;
        Ok(BackendResponse {
            output: ExpertOutput {
                payload: parsed.output,
                latency_ms: 0,
                expert_name: self.name.clone(),
            },
            data,
        })
    }
}

#[async_trait]
impl ExpertBackend for RemoteBackend {
    async fn execute(&self, req: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        let body = RemoteRequest::from(req);
        let start = Instant::now();
        let mut attempt = 0u32;
        loop {
            match self.attempt(&body).await {
                Attempt::Done(result) => {
                    return result.map(|mut r| {
                        r.output.latency_ms = start.elapsed().as_millis() as u64;
                        r
                    })
                }
                Attempt::Transport(err) if attempt >= self.max_retries => {
                    return Err(ExpertFailure::new(
                        FailureCode::RemoteTimeout,
                        format!("{} after {} attempt(s): {err}", self.endpoint, attempt + 1),
                    ))
                }
                Attempt::Transport(err) => {
                    let wait = self.backoff.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(expert = %self.name, attempt, ?wait, "transport error, retrying: {err}");
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
            }
        }
    }
}
