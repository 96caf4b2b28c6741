//! Turns a parsed reply plus session context into an ordered plan of
//! expert invocations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{sha256_hex, ArtifactRef};
use crate::protocol::{tasks, validate, MediaKind, ParsedMessage, Region, TaskKind, Violation};
use crate::registry::{ExpertDescriptor, ExpertRegistry, RegistryError};
use crate::session::{SessionContext, Slot};

/// Where an invocation's input artifact comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InputBinding {
    /// The artifact held in a session slot when the plan was built.
    Session { slot: Slot, artifact: ArtifactRef },
    /// The output of an earlier invocation in the same plan.
    PlanOutput { ordinal: usize, media: MediaKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInvocation {
    pub ordinal: usize,
    pub kind: TaskKind,
    pub prompt: String,
    pub regions: Vec<Region>,
    pub input_artifacts: Vec<InputBinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub plan_id: String,
    pub session_id: String,
    pub turn_index: u64,
    pub invocations: Vec<TaskInvocation>,
    pub passthrough_text: String,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum RouteError {
    #[error("message failed validation with {} violation(s)", violations.len())]
    ValidationFailed { violations: Vec<Violation> },
    #[error("invocation {ordinal} ({kind}) needs an input artifact of media {media} but the session has none")]
    MissingArtifact {
        ordinal: usize,
        kind: TaskKind,
        media: MediaKind,
    },
}

/// Builds the plan for one reply. Pure: the same message and context always
/// give the same plan.
///
/// Tasks that consume an image or video bind the most recent artifact of
/// that medium, preferring one produced earlier in the same plan over the
/// session slot.
pub fn route(msg: &ParsedMessage, ctx: &SessionContext) -> Result<RoutingPlan, RouteError> {
    let violations = validate(msg);
    if !violations.is_empty() {
        return Err(RouteError::ValidationFailed { violations });
    }
    let mut invocations: Vec<TaskInvocation> = Vec::new();
    for (ordinal, t) in tasks(msg).into_iter().enumerate() {
        let mut input_artifacts = Vec::new();
        if let Some(media) = t.kind.input_media() {
            let produced = invocations
                .iter()
                .rev()
                .find(|inv| inv.kind.output_media() == media)
                .map(|inv| InputBinding::PlanOutput {
                    ordinal: inv.ordinal,
                    media,
                });
            let binding = match produced {
                Some(b) => b,
                None => {
                    let slot = Slot::for_media(media).expect("consumed media has a slot");
                    let artifact = ctx.slot(slot).cloned().ok_or(RouteError::MissingArtifact {
                        ordinal,
                        kind: t.kind,
                        media,
                    })?;
                    InputBinding::Session { slot, artifact }
                }
            };
            input_artifacts.push(binding);
        }
        invocations.push(TaskInvocation {
            ordinal,
            kind: t.kind,
            prompt: t.payload.to_string(),
            regions: t.regions,
            input_artifacts,
        });
    }
    Ok(RoutingPlan {
        plan_id: plan_id(&ctx.session_id, ctx.turn_index, &msg.raw),
        session_id: ctx.session_id.clone(),
        turn_index: ctx.turn_index,
        invocations,
        passthrough_text: msg.plain_text(),
    })
}

/// Stable identifier of the plan for `raw` at a given turn of a session.
pub fn plan_id(session_id: &str, turn_index: u64, raw: &str) -> String {
    let keyed = serde_json::json!([session_id, turn_index, raw]).to_string();
    sha256_hex(keyed.as_bytes())[..32].to_string()
}

/// The descriptor registered for `kind`.
pub fn resolve_task(kind: TaskKind, registry: &ExpertRegistry) -> Result<&ExpertDescriptor, RegistryError> {
    registry
        .resolve(kind)
        .map(|e| &e.descriptor)
        .ok_or(RegistryError::NoExpertRegistered(kind))
}
