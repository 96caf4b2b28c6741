//! Per-session multi-turn state: the latest artifact of each modality and
//! the history of routed turns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactRef;
use crate::dispatch::{ExecutionResult, OutcomeStatus};
use crate::protocol::MediaKind;
use crate::router::RoutingPlan;

/// Modality slots an invocation can implicitly consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    CurrentImage,
    CurrentVideo,
    CurrentAudio,
}

impl Slot {
    pub fn for_media(media: MediaKind) -> Option<Slot> {
        match media {
            MediaKind::Image => Some(Slot::CurrentImage),
            MediaKind::Video => Some(Slot::CurrentVideo),
            MediaKind::Audio => Some(Slot::CurrentAudio),
            MediaKind::Mask | MediaKind::Layout => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn_index: u64,
    pub message: String,
    pub plan: RoutingPlan,
    pub result: ExecutionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub session_id: String,
    pub turn_index: u64,
    pub artifact_store: BTreeMap<Slot, ArtifactRef>,
    pub history: Vec<HistoryEntry>,
}

impl SessionContext {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            turn_index: 0,
            artifact_store: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn slot(&self, slot: Slot) -> Option<&ArtifactRef> {
        self.artifact_store.get(&slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("result belongs to session {found:?}, not {expected:?}")]
    SessionMismatch { expected: String, found: String },
}

/// Advances `ctx` by one turn: bumps the turn index, points each modality
/// slot at the newest artifact the turn produced, and appends the turn to
/// history.
pub fn update_session(
    ctx: &SessionContext,
    message: &str,
    plan: &RoutingPlan,
    result: &ExecutionResult,
) -> Result<SessionContext, SessionError> {
    for found in [&result.session_id, &plan.session_id] {
        if *found != ctx.session_id {
            return Err(SessionError::SessionMismatch {
                expected: ctx.session_id.clone(),
                found: found.clone(),
            });
        }
    }
    let mut next = ctx.clone();
    for outcome in &result.outcomes {
        if let OutcomeStatus::Success { output } = &outcome.status {
            if let Some(artifact) = output.artifact() {
                if let Some(slot) = Slot::for_media(artifact.media) {
                    next.artifact_store.insert(slot, artifact.clone());
                }
            }
        }
    }
    next.history.push(HistoryEntry {
        turn_index: ctx.turn_index,
        message: message.to_string(),
        plan: plan.clone(),
        result: result.clone(),
    });
    next.turn_index += 1;
    Ok(next)
}
