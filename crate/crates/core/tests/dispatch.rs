use std::sync::Arc;

use async_trait::async_trait;
use tokroute_core::artifact::{ArtifactRef, ArtifactStore};
use tokroute_core::dispatch::{dispatch, dispatch_with_store, DispatchError, OutcomeStatus};
use tokroute_core::protocol::{parse, MediaKind, TaskKind};
use tokroute_core::registry::{
    mock_execute, BackendResponse, ExpertBackend, ExpertDescriptor, ExpertFailure, ExpertOutput, ExpertRegistry,
    ExpertRequest, FailureCode, OutputPayload,
};
use tokroute_core::router::route;
use tokroute_core::session::{update_session, SessionContext, SessionError, Slot};

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

struct Panicking;

#[async_trait]
impl ExpertBackend for Panicking {
    async fn execute(&self, _: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        panic!("gpu on fire")
    }
}

struct Refusing;

#[async_trait]
impl ExpertBackend for Refusing {
    async fn execute(&self, _: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        Err(ExpertFailure::new(FailureCode::ExpertError, "nsfw filter"))
    }
}

/// Claims success but returns audio whatever it is asked.
struct WrongMedia;

#[async_trait]
impl ExpertBackend for WrongMedia {
    async fn execute(&self, _: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        Ok(BackendResponse {
            output: ExpertOutput {
                payload: OutputPayload::Artifact {
                    artifact: ArtifactRef::for_bytes(b"beep", MediaKind::Audio),
                },
                latency_ms: 1,
                expert_name: "wrong".into(),
            },
            data: None,
        })
    }
}

fn registry_with(kind: TaskKind, backend: Arc<dyn ExpertBackend>) -> ExpertRegistry {
    let mut reg = ExpertRegistry::new();
    for d in tokroute_core::registry::default_descriptors(7) {
        if d.supported_kinds.contains(&kind) {
            let kinds = d.supported_kinds.clone();
            reg.register_with_backend(ExpertDescriptor { supported_kinds: kinds, ..d }, backend.clone())
                .unwrap();
        } else {
            reg.register(d).unwrap();
        }
    }
    reg
}

#[test]
fn image_generation_is_deterministic_per_seed_and_prompt() {
    let reg = ExpertRegistry::default_mock(7);
    let ctx = SessionContext::new("s1");
    let plan = route(&parse("<Gen>a lighthouse at dusk</Gen>").unwrap(), &ctx).unwrap();
    let a = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let b = rt().block_on(dispatch(&plan, &reg)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.outcomes.len(), 1);
    let OutcomeStatus::Success { output } = &a.outcomes[0].status else {
        panic!("{:?}", a.outcomes[0])
    };
    assert_eq!(output.expert_name, "stable-diffusion");
    assert_eq!(output.artifact().unwrap().media, MediaKind::Image);

    let other = rt().block_on(dispatch(&plan, &ExpertRegistry::default_mock(8))).unwrap();
    assert_ne!(a.outcomes[0].status, other.outcomes[0].status);
}

#[test]
fn dispatch_output_matches_direct_mock_call() {
    let reg = ExpertRegistry::default_mock(7);
    let plan = route(&parse("<Gen>a fox</Gen>").unwrap(), &SessionContext::new("s")).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let req = ExpertRequest {
        kind: TaskKind::ImageGen,
        prompt: "a fox".into(),
        regions: vec![],
        input_artifacts: vec![],
        idempotency_key: String::new(),
    };
    // stable-diffusion is first in the line-up, so its seed is the base seed.
    let direct = mock_execute(&req, 7);
    assert_eq!(res.produced().next(), direct.artifact());
}

#[test]
fn empty_plan_gives_empty_result() {
    let plan = route(&parse("just words").unwrap(), &SessionContext::new("s")).unwrap();
    let res = rt().block_on(dispatch(&plan, &ExpertRegistry::default_mock(0))).unwrap();
    assert!(res.outcomes.is_empty());
    assert_eq!(res.total_latency_ms, 0);
}

#[test]
fn unregistered_kind_is_an_error_before_anything_runs() {
    let mut reg = ExpertRegistry::new();
    reg.register(ExpertDescriptor::mock("sd", [TaskKind::ImageGen], 0)).unwrap();
    let plan = route(&parse("<Gen>x</Gen><AudioGen>y</AudioGen>").unwrap(), &SessionContext::new("s")).unwrap();
    assert_eq!(
        rt().block_on(dispatch(&plan, &reg)),
        Err(DispatchError::NoExpertRegistered {
            ordinal: 1,
            kind: TaskKind::AudioGen
        })
    );
}

#[test]
fn panicking_expert_becomes_a_failure() {
    let reg = registry_with(TaskKind::ImageGen, Arc::new(Panicking));
    let plan = route(
        &parse("<Gen>x</Gen><AudioGen>rain</AudioGen>").unwrap(),
        &SessionContext::new("s"),
    )
    .unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    assert_eq!(res.outcomes.len(), 2);
    assert_eq!(res.outcomes[0].failure_code(), Some(FailureCode::ExpertPanicked));
    assert!(res.outcomes[1].is_success());
}

#[test]
fn failure_only_blocks_dependent_invocations() {
    let reg = registry_with(TaskKind::ImageGen, Arc::new(Refusing));
    let text = "<Gen>a barn</Gen><Animate>sway</Animate><VideoGen>waves</VideoGen>";
    let plan = route(&parse(text).unwrap(), &SessionContext::new("s")).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let codes: Vec<_> = res.outcomes.iter().map(|o| o.failure_code()).collect();
    assert_eq!(codes, vec![Some(FailureCode::ExpertError), Some(FailureCode::DependencyFailed), None]);
    let ordinals: Vec<_> = res.outcomes.iter().map(|o| o.ordinal).collect();
    assert_eq!(ordinals, vec![0, 1, 2]);
}

#[test]
fn dependent_invocation_consumes_earlier_output() {
    let reg = ExpertRegistry::default_mock(1);
    let plan = route(&parse("<Gen>a barn</Gen><Animate>sway</Animate>").unwrap(), &SessionContext::new("s")).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let produced: Vec<_> = res.produced().cloned().collect();
    assert_eq!(produced.len(), 2);
    let req = ExpertRequest {
        kind: TaskKind::ImageToVideo,
        prompt: "sway".into(),
        regions: vec![],
        input_artifacts: vec![produced[0].clone()],
        idempotency_key: String::new(),
    };
    // i2vgen-xl is eighth in the line-up.
    assert_eq!(mock_execute(&req, 1 + 7).artifact(), Some(&produced[1]));
}

#[test]
fn wrong_media_is_invalid_output() {
    let reg = registry_with(TaskKind::ImageGen, Arc::new(WrongMedia));
    let plan = route(&parse("<Gen>x</Gen>").unwrap(), &SessionContext::new("s")).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    assert_eq!(res.outcomes[0].failure_code(), Some(FailureCode::InvalidOutput));
}

#[test]
fn store_receives_artifact_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::open(dir.path()).unwrap();
    let reg = ExpertRegistry::default_mock(0);
    let plan = route(
        &parse("<Gen>a cat</Gen><AudioGen>meow</AudioGen>").unwrap(),
        &SessionContext::new("s"),
    )
    .unwrap();
    let res = rt().block_on(dispatch_with_store(&plan, &reg, Some(&store))).unwrap();
    for a in res.produced() {
        let bytes = store.get(a).unwrap();
        assert_eq!(&ArtifactRef::for_bytes(&bytes, a.media), a);
    }
}

#[test]
fn session_slots_follow_outputs() {
    let reg = ExpertRegistry::default_mock(0);
    let ctx = SessionContext::new("s");
    let msg = "<Gen>a cat</Gen>";
    let plan = route(&parse(msg).unwrap(), &ctx).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let ctx1 = update_session(&ctx, msg, &plan, &res).unwrap();
    let h1 = res.produced().next().unwrap().clone();
    assert_eq!(ctx1.turn_index, 1);
    assert_eq!(ctx1.slot(Slot::CurrentImage), Some(&h1));
    assert_eq!(ctx1.history.len(), 1);

    // A segmentation mask leaves the image slot alone.
    let msg = "<Seg>the cat</Seg><box>[0.1,0.1,0.6,0.6]</box>";
    let plan = route(&parse(msg).unwrap(), &ctx1).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let ctx2 = update_session(&ctx1, msg, &plan, &res).unwrap();
    assert_eq!(ctx2.artifact_store, ctx1.artifact_store);
    assert_eq!(ctx2.turn_index, 2);
    assert_eq!(ctx2.history[0], ctx1.history[0]);

    // An edit replaces it.
    let msg = "<Edit>add a hat</Edit><box>[0.2,0.0,0.5,0.3]</box>";
    let plan = route(&parse(msg).unwrap(), &ctx2).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let ctx3 = update_session(&ctx2, msg, &plan, &res).unwrap();
    assert_ne!(ctx3.slot(Slot::CurrentImage), Some(&h1));
    assert_eq!(ctx3.slot(Slot::CurrentImage), res.produced().next());

    let other = SessionContext::new("t");
    assert!(matches!(
        update_session(&other, msg, &plan, &res),
        Err(SessionError::SessionMismatch { .. })
    ));
}

#[test]
fn text_only_turn_changes_only_index_and_history() {
    let reg = ExpertRegistry::default_mock(0);
    let mut ctx = SessionContext::new("s");
    ctx.artifact_store
        .insert(Slot::CurrentAudio, ArtifactRef::for_bytes(b"a", MediaKind::Audio));
    let plan = route(&parse("hello").unwrap(), &ctx).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let next = update_session(&ctx, "hello", &plan, &res).unwrap();
    assert_eq!(next.artifact_store, ctx.artifact_store);
    assert_eq!(next.turn_index, ctx.turn_index + 1);
    assert_eq!(next.history.len(), 1);
}

#[test]
fn mask_for_region_is_center_block() {
    let reg = ExpertRegistry::default_mock(0);
    let mut ctx = SessionContext::new("s");
    ctx.artifact_store
        .insert(Slot::CurrentImage, ArtifactRef::for_bytes(b"dog.png", MediaKind::Image));
    let plan = route(&parse("<Seg>the dog</Seg><box>[0.25,0.25,0.75,0.75]</box>").unwrap(), &ctx).unwrap();
    let res = rt().block_on(dispatch(&plan, &reg)).unwrap();
    let OutcomeStatus::Success { output } = &res.outcomes[0].status else {
        panic!()
    };
    let OutputPayload::Mask { grid, .. } = &output.payload else {
        panic!()
    };
    // On the default 16x16 grid, centers 4.5/16 ..= 11.5/16 lie inside.
    assert_eq!(grid.count(), 8 * 8);
    assert!(grid.get(4, 4) && grid.get(11, 11) && !grid.get(3, 4) && !grid.get(12, 12));
}
