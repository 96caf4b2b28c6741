use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokroute_core::artifact::ArtifactRef;
use tokroute_core::protocol::{MediaKind, Segment};
use tokroute_core::registry::{mock_execute, ExpertRequest};
use tokroute_core::router::route;
use tokroute_core::session::{SessionContext, Slot};
use tokroute_core::synth::{random_message, random_region, random_text, MessageOptions};

fn full_context() -> SessionContext {
    let mut ctx = SessionContext::new("prop");
    ctx.artifact_store
        .insert(Slot::CurrentImage, ArtifactRef::for_bytes(b"img", MediaKind::Image));
    ctx.artifact_store
        .insert(Slot::CurrentVideo, ArtifactRef::for_bytes(b"vid", MediaKind::Video));
    ctx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn plans_are_deterministic_ordered_and_complete(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = MessageOptions { validating: true, ..MessageOptions::default() };
        let msg = random_message(&mut rng, opts);
        let ctx = full_context();
        let a = serde_json::to_string(&route(&msg, &ctx).unwrap()).unwrap();
        let b = serde_json::to_string(&route(&msg, &ctx).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);

        let plan = route(&msg, &ctx).unwrap();
        let lexical: Vec<_> = msg
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Task { kind, payload, .. } => Some((*kind, payload.clone())),
                _ => None,
            })
            .collect();
        let planned: Vec<_> = plan.invocations.iter().map(|i| (i.kind, i.prompt.clone())).collect();
        prop_assert_eq!(lexical, planned);
        for (i, inv) in plan.invocations.iter().enumerate() {
            prop_assert_eq!(inv.ordinal, i);
            if inv.kind.input_media().is_none() {
                prop_assert!(inv.input_artifacts.is_empty());
            }
            if inv.kind.requires_region() {
                prop_assert!(!inv.regions.is_empty());
            }
        }
    }

    #[test]
    fn mock_is_referentially_transparent(seed in any::<u64>(), expert_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = tokroute_core::protocol::TaskKind::ALL[(seed % 10) as usize];
        let req = ExpertRequest {
            kind,
            prompt: random_text(&mut rng, true),
            regions: (0..(seed % 3)).map(|_| random_region(&mut rng)).collect(),
            input_artifacts: vec![ArtifactRef::for_bytes(&seed.to_le_bytes(), MediaKind::Image)],
            idempotency_key: String::new(),
        };
        let a = serde_json::to_vec(&mock_execute(&req, expert_seed)).unwrap();
        let b = serde_json::to_vec(&mock_execute(&req.clone(), expert_seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
