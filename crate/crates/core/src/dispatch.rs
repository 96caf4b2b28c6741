//! Executes a routing plan against the registry.

use std::panic::AssertUnwindSafe;

use futures::FutureExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{sha256_hex, ArtifactRef, ArtifactStore};
use crate::protocol::TaskKind;
use crate::registry::{BackendResponse, ExpertFailure, ExpertOutput, ExpertRegistry, ExpertRequest, FailureCode};
use crate::router::{InputBinding, RoutingPlan, TaskInvocation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OutcomeStatus {
    Success { output: ExpertOutput },
    Failure { code: FailureCode, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub ordinal: usize,
    pub kind: TaskKind,
    pub expert: String,
    #[serde(flatten)]
    pub status: OutcomeStatus,
    pub latency_ms: u64,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self.status, OutcomeStatus::Success { .. })
    }

    pub fn failure_code(&self) -> Option<FailureCode> {
        match &self.status {
            OutcomeStatus::Failure { code, .. } => Some(*code),
            OutcomeStatus::Success { .. } => None,
        }
    }
}

/// One outcome per invocation, in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub session_id: String,
    pub plan_id: String,
    pub outcomes: Vec<Outcome>,
    pub total_latency_ms: u64,
}

impl ExecutionResult {
    pub fn produced(&self) -> impl Iterator<Item = &ArtifactRef> {
        self.outcomes.iter().filter_map(|o| match &o.status {
            OutcomeStatus::Success { output } => output.artifact(),
            OutcomeStatus::Failure { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("no expert registered for {kind} (invocation {ordinal})")]
    NoExpertRegistered { ordinal: usize, kind: TaskKind },
}

/// Idempotency key sent with an invocation: stable across retries and
/// replays of the same plan.
pub fn idempotency_key(plan_id: &str, ordinal: usize) -> String {
    sha256_hex(format!("{plan_id}:{ordinal}").as_bytes())[..32].to_string()
}

/// Runs the plan without persisting artifact bytes.
pub async fn dispatch(plan: &RoutingPlan, registry: &ExpertRegistry) -> Result<ExecutionResult, DispatchError> {
    dispatch_with_store(plan, registry, None).await
}

/// Runs every invocation in order. Every kind must resolve before anything
/// runs; after that, failures are recorded per invocation and never abort
/// the plan. An invocation whose input was supposed to come from a failed
/// earlier invocation fails with `DependencyFailed` without running.
pub async fn dispatch_with_store(
    plan: &RoutingPlan,
    registry: &ExpertRegistry,
    store: Option<&ArtifactStore>,
) -> Result<ExecutionResult, DispatchError> {
    let experts = plan
        .invocations
        .iter()
        .map(|inv| {
            registry.resolve(inv.kind).ok_or(DispatchError::NoExpertRegistered {
                ordinal: inv.ordinal,
                kind: inv.kind,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut outcomes: Vec<Outcome> = Vec::with_capacity(plan.invocations.len());
    for (inv, expert) in plan.invocations.iter().zip(experts) {
        let result = match resolve_inputs(inv, &outcomes) {
            Ok(inputs) => {
                let req = ExpertRequest {
                    kind: inv.kind,
                    prompt: inv.prompt.clone(),
                    regions: inv.regions.clone(),
                    input_artifacts: inputs,
                    idempotency_key: idempotency_key(&plan.plan_id, inv.ordinal),
                };
                let run = AssertUnwindSafe(expert.backend.execute(&req)).catch_unwind().await;
                match run {
                    Ok(Ok(resp)) => accept(inv.kind, resp, store),
                    Ok(Err(failure)) => Err(failure),
                    Err(panic) => Err(ExpertFailure::new(FailureCode::ExpertPanicked, panic_message(&panic))),
                }
            }
            Err(failure) => Err(failure),
        };
        let name = expert.descriptor.name.clone();
        let outcome = match result {
            Ok(mut output) => {
                output.expert_name = name.clone();
                Outcome {
                    ordinal: inv.ordinal,
                    kind: inv.kind,
                    expert: name,
                    latency_ms: output.latency_ms,
                    status: OutcomeStatus::Success { output },
                }
            }
            Err(f) => {
                tracing::debug!(ordinal = inv.ordinal, kind = %inv.kind, "invocation failed: {f}");
                Outcome {
                    ordinal: inv.ordinal,
                    kind: inv.kind,
                    expert: name,
                    latency_ms: 0,
                    status: OutcomeStatus::Failure {
                        code: f.code,
                        detail: f.detail,
                    },
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(ExecutionResult {
        session_id: plan.session_id.clone(),
        plan_id: plan.plan_id.clone(),
        total_latency_ms: outcomes.iter().map(|o| o.latency_ms).sum(),
        outcomes,
    })
}

fn resolve_inputs(inv: &TaskInvocation, done: &[Outcome]) -> Result<Vec<ArtifactRef>, ExpertFailure> {
    inv.input_artifacts
        .iter()
        .map(|b| match b {
            InputBinding::Session { artifact, .. } => Ok(artifact.clone()),
            InputBinding::PlanOutput { ordinal, media } => {
                let produced = done.get(*ordinal).and_then(|o| match &o.status {
                    OutcomeStatus::Success { output } => output.artifact().filter(|a| a.media == *media),
                    OutcomeStatus::Failure { .. } => None,
                });
                produced.cloned().ok_or_else(|| {
                    ExpertFailure::new(
                        FailureCode::DependencyFailed,
                        format!("input {media} from invocation {ordinal} is unavailable"),
                    )
                })
            }
        })
        .collect()
}

fn accept(kind: TaskKind, resp: BackendResponse, store: Option<&ArtifactStore>) -> Result<ExpertOutput, ExpertFailure> {
    let BackendResponse { output, data } = resp;
    let media = output.payload.media();
    if media != kind.output_media() {
        return Err(ExpertFailure::new(
            FailureCode::InvalidOutput,
            format!("{kind} must produce {}, expert produced {media}", kind.output_media()),
        ));
    }
    if let (Some(artifact), Some(bytes)) = (output.artifact(), data) {
        let actual = sha256_hex(&bytes);
        if actual != artifact.hash {
            return Err(ExpertFailure::new(
                FailureCode::InvalidOutput,
                format!("artifact {} does not match its bytes ({actual})", artifact.hash),
            ));
        }
        if let Some(store) = store {
            store
                .put(&bytes, artifact.media)
                .map_err(|e| ExpertFailure::new(FailureCode::StoreFailed, e.to_string()))?;
        }
    }
    Ok(output)
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("expert panicked: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("expert panicked: {s}")
    } else {
        "expert panicked".to_string()
    }
}
