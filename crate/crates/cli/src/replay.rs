//! Transcript replay: each model-output turn goes through parse, route,
//! dispatch and session update, in order, starting from a fresh session.
//! A failing turn is recorded in the report and leaves the session as it
//! was; later turns still run.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokroute_core::artifact::ArtifactStore;
use tokroute_core::dispatch::{dispatch_with_store, ExecutionResult};
use tokroute_core::protocol::{parse, tasks, Segment, TaskKind, Violation};
use tokroute_core::registry::ExpertRegistry;
use tokroute_core::router::{route, RouteError, RoutingPlan};
use tokroute_core::session::{update_session, SessionContext};

use crate::config::{ConfigError, EffectiveConfig};

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub session_id: String,
    pub turn_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub session_id: String,
    pub turns: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("transcript has no turns")]
    Empty,
    #[error("line {line}: session {found:?} differs from {expected:?}; a transcript holds one session")]
    MixedSessions {
        line: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads JSONL `{session_id, turn_text}` lines, skipping blank lines.
pub fn read_transcript<R: BufRead>(reader: R) -> Result<Transcript, TranscriptError> {
    let mut session: Option<String> = None;
    let mut turns = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line).map_err(|e| TranscriptError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        match &session {
            None => session = Some(parsed.session_id),
            Some(s) if *s != parsed.session_id => {
                return Err(TranscriptError::MixedSessions {
                    line: i + 1,
                    expected: s.clone(),
                    found: parsed.session_id,
                })
            }
            Some(_) => {}
        }
        turns.push(parsed.turn_text);
    }
    match session {
        Some(session_id) => Ok(Transcript { session_id, turns }),
        None => Err(TranscriptError::Empty),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub segments: usize,
    pub tasks: Vec<TaskKind>,
    pub regions: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Route,
    Dispatch,
    Session,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnError {
    pub stage: Stage,
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReport {
    pub index: usize,
    pub input: String,
    pub parsed: Option<ParseSummary>,
    pub plan: Option<RoutingPlan>,
    pub result: Option<ExecutionResult>,
    pub error: Option<TurnError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: EffectiveConfig,
    pub session_id: String,
    pub turns: Vec<TurnReport>,
    pub final_context: SessionContext,
    pub invocations: usize,
    pub failed_invocations: usize,
    pub failed_turns: usize,
    pub total_latency_ms: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open artifact store: {0}")]
    Store(#[from] tokroute_core::artifact::StoreError),
}

pub fn route_error(e: &RouteError) -> TurnError {
    match e {
        RouteError::ValidationFailed { violations } => TurnError {
            stage: Stage::Route,
            code: "validation_failed".into(),
            detail: e.to_string(),
            violations: violations.clone(),
        },
        RouteError::MissingArtifact { .. } => TurnError {
            stage: Stage::Route,
            code: "missing_artifact".into(),
            detail: e.to_string(),
            violations: vec![],
        },
    }
}

fn summarize(msg: &tokroute_core::protocol::ParsedMessage) -> ParseSummary {
    ParseSummary {
        segments: msg.segments.len(),
        tasks: tasks(msg).iter().map(|t| t.kind).collect(),
        regions: msg
            .segments
            .iter()
            .map(|s| match s {
                Segment::Task { regions, .. } => regions.len(),
                Segment::Grounding { .. } => 1,
                Segment::Text { .. } => 0,
            })
            .sum(),
        text: msg.plain_text(),
    }
}

/// Runs one turn against `ctx`, returning its report and the next context.
pub async fn run_turn(
    index: usize,
    text: &str,
    ctx: &SessionContext,
    registry: &ExpertRegistry,
    store: Option<&ArtifactStore>,
) -> (TurnReport, Option<SessionContext>) {
    let mut report = TurnReport {
        index,
        input: text.to_string(),
        parsed: None,
        plan: None,
        result: None,
        error: None,
    };
    let msg = match parse(text) {
        Ok(m) => m,
        Err(e) => {
            report.error = Some(TurnError {
                stage: Stage::Parse,
                code: "malformed_token".into(),
                detail: e.to_string(),
                violations: vec![Violation::from(&e)],
            });
            return (report, None);
        }
    };
    report.parsed = Some(summarize(&msg));
    let plan = match route(&msg, ctx) {
        Ok(p) => p,
        Err(e) => {
            report.error = Some(route_error(&e));
            return (report, None);
        }
    };
    report.plan = Some(plan.clone());
    let result = match dispatch_with_store(&plan, registry, store).await {
        Ok(r) => r,
        Err(e) => {
            report.error = Some(TurnError {
                stage: Stage::Dispatch,
                code: "no_expert_registered".into(),
                detail: e.to_string(),
                violations: vec![],
            });
            return (report, None);
        }
    };
    report.result = Some(result.clone());
    match update_session(ctx, text, &plan, &result) {
        Ok(next) => (report, Some(next)),
        Err(e) => {
            report.error = Some(TurnError {
                stage: Stage::Session,
                code: "session_mismatch".into(),
                detail: e.to_string(),
                violations: vec![],
            });
            (report, None)
        }
    }
}

/// Replays with an explicit registry and optional artifact store.
pub async fn run_with(
    t: &Transcript,
    config: &EffectiveConfig,
    registry: &ExpertRegistry,
    store: Option<&ArtifactStore>,
) -> RunReport {
    let mut ctx = SessionContext::new(t.session_id.clone());
    let mut turns = Vec::with_capacity(t.turns.len());
    for (i, text) in t.turns.iter().enumerate() {
        let (report, next) = run_turn(i, text, &ctx, registry, store).await;
        if let Some(err) = &report.error {
            tracing::warn!(turn = i, stage = ?err.stage, "{}", err.detail);
        }
        if let Some(next) = next {
            ctx = next;
        }
        turns.push(report);
    }
    let outcomes = || turns.iter().filter_map(|t| t.result.as_ref()).flat_map(|r| &r.outcomes);
    RunReport {
        config: config.clone(),
        session_id: t.session_id.clone(),
        invocations: outcomes().count(),
        failed_invocations: outcomes().filter(|o| !o.is_success()).count(),
        failed_turns: turns.iter().filter(|t| t.error.is_some()).count(),
        total_latency_ms: turns
            .iter()
            .filter_map(|t| t.result.as_ref())
            .map(|r| r.total_latency_ms)
            .sum(),
        final_context: ctx,
        turns,
    }
}

/// Replays `t` under `config`. Only configuration problems are errors;
/// everything that goes wrong inside a turn ends up in the report.
pub async fn run_transcript(t: &Transcript, config: &EffectiveConfig) -> Result<RunReport, ReplayError> {
    let registry = config.build_registry()?;
    let store = ArtifactStore::open(config.artifact_dir())?;
    Ok(run_with(t, config, &registry, Some(&store)).await)
}
