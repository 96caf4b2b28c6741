use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokroute_core::protocol::{parse, serialize, Segment, StreamState};
use tokroute_core::synth::{random_chunking, random_message, random_noise, MessageOptions};

fn stream_parse(chunks: &[&str]) -> Result<Vec<Segment>, tokroute_core::protocol::MalformedToken> {
    let mut state = StreamState::new();
    let mut out = Vec::new();
    for c in chunks {
        out.extend(state.feed(c)?);
    }
    out.extend(state.finish()?);
    Ok(out)
}

fn regions_of(segments: &[Segment]) -> Vec<tokroute_core::protocol::Region> {
    segments
        .iter()
        .flat_map(|s| match s {
            Segment::Task { regions, .. } => regions.clone(),
            Segment::Grounding { region } => vec![*region],
            Segment::Text { .. } => vec![],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_message(&mut rng, MessageOptions::default());
        let text = serialize(&m).unwrap();
        prop_assert_eq!(&text, &m.raw);
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.segments, m.segments);
        prop_assert_eq!(back.spans, m.spans);
    }

    #[test]
    fn chunking_does_not_change_the_result(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = if seed % 2 == 0 {
            random_noise(&mut rng, 24)
        } else {
            random_message(&mut rng, MessageOptions::default()).raw
        };
        let batch = parse(&s).map(|m| m.segments);
        for _ in 0..5 {
            let chunks = random_chunking(&mut rng, &s);
            prop_assert_eq!(&stream_parse(&chunks), &batch, "chunks {:?}", chunks);
        }
    }

    #[test]
    fn spans_tile_the_input(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_noise(&mut rng, 24);
        if let Ok(m) = parse(&s) {
            let mut at = 0;
            for span in &m.spans {
                prop_assert_eq!(span.start, at);
                at = span.end;
            }
            prop_assert_eq!(at, s.len());
            prop_assert!(regions_of(&m.segments).iter().all(|r| r.is_valid()));
        }
    }

    #[test]
    fn arbitrary_strings_never_panic(s in any::<String>()) {
        let _ = parse(&s);
    }

    #[test]
    fn arbitrary_tagged_strings_never_panic(s in "[<>/a-zA-Z0-9\\[\\],. ]{0,64}") {
        if let Ok(m) = parse(&s) {
            prop_assert!(regions_of(&m.segments).iter().all(|r| r.is_valid()));
        }
    }
}
