use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokroute_core::protocol::{parse, serialize, validate, Region};
use tokroute_dataset::jsonl::{read_records, write_records};
use tokroute_dataset::synth::random_sample;
use tokroute_dataset::{
    build_multiturn, dataset_stats, filter_records, first_violation, inject, region_iou, Fault, Role, TemplateSet,
};

/// Exact IoU on the thousandths grid using integer areas.
fn iou_oracle(a: &Region, b: &Region) -> f64 {
    let m = |v: f64| (v * 1000.0).round() as i64;
    let (ax1, ay1, ax2, ay2) = (m(a.x1), m(a.y1), m(a.x2), m(a.y2));
    let (bx1, by1, bx2, by2) = (m(b.x1), m(b.y1), m(b.x2), m(b.y2));
    let inter = (ax2.min(bx2) - ax1.max(bx1)).max(0) * (ay2.min(by2) - ay1.max(by1)).max(0);
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn seventeen_of_a_hundred_corrupted() {
    let set = TemplateSet::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut records: Vec<_> = (0..100)
        .map(|i| {
            let s = random_sample(&mut rng);
            build_multiturn(&s, 1 + i % 4, i as u64, &set).unwrap()
        })
        .collect();
    let corrupted: BTreeSet<usize> = sample(&mut rng, 100, 17).into_iter().collect();
    let mut truth = Vec::new();
    for &i in &corrupted {
        let fault = Fault::ALL[rng.random_range(0..3)];
        let (bad, injected) = inject(&records[i], fault, &mut rng).unwrap();
        records[i] = bad;
        records[i].id = format!("corrupt-{i}");
        truth.push((records[i].id.clone(), injected));
    }
    let report = filter_records(&records);
    assert_eq!(report.kept, 83);
    assert_eq!(report.rejected.len(), 17);
    for (rej, (id, injected)) in report.rejected.iter().zip(&truth) {
        assert_eq!(&rej.id, id);
        assert_eq!(rej.violation.code, injected.code);
        assert_eq!(rej.violation.turn, Some(injected.turn));
    }
}

#[test]
fn iou_reference_values_and_oracle_agreement() {
    let a = Region::new(0.0, 0.0, 0.5, 0.5).unwrap();
    let b = Region::new(0.25, 0.25, 0.75, 0.75).unwrap();
    assert!((region_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(iou_oracle(&a, &b), 1.0 / 7.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let a = tokroute_core::synth::random_region(&mut rng);
        let b = tokroute_core::synth::random_region(&mut rng);
        let v = region_iou(&a, &b);
        assert!((0.0..=1.0).contains(&v));
        assert!((v - iou_oracle(&a, &b)).abs() < 1e-9, "{a} {b}");
    }
}

#[test]
fn built_corpus_round_trips_through_jsonl() {
    let set = TemplateSet::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records: Vec<_> = (0..50)
        .map(|i| build_multiturn(&random_sample(&mut rng), 3, i, &set).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    write_records(std::fs::File::create(&path).unwrap(), &records).unwrap();
    let back = read_records(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, records);
    let stats = dataset_stats(&back);
    assert_eq!(stats.records, 50);
    assert_eq!(stats.turn_histogram.get(&6), Some(&50));
    assert_eq!(stats.task_counts.values().sum::<usize>(), 150);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn builder_output_always_passes_filter(seed in any::<u64>(), turns in 1usize..6) {
        let set = TemplateSet::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_sample(&mut rng);
        let rec = build_multiturn(&s, turns, seed, &set).unwrap();
        prop_assert_eq!(first_violation(&rec), None);
        prop_assert_eq!(rec.turns.len(), 2 * turns);
        // Kept replies survive a parse/serialize round trip unchanged.
        for t in rec.turns.iter().filter(|t| t.role == Role::Assistant) {
            let msg = parse(&t.content).unwrap();
            prop_assert!(validate(&msg).is_empty());
            prop_assert_eq!(serialize(&msg).unwrap(), t.content.clone());
        }
        prop_assert_eq!(&rec, &build_multiturn(&s, turns, seed, &set).unwrap());
    }

    #[test]
    fn injected_faults_are_always_caught(seed in any::<u64>(), f in 0usize..3) {
        let set = TemplateSet::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = build_multiturn(&random_sample(&mut rng), rng.random_range(1..5), seed, &set).unwrap();
        let (bad, injected) = inject(&rec, Fault::ALL[f], &mut rng).unwrap();
        let v = first_violation(&bad).unwrap();
        prop_assert_eq!((v.code, v.turn), (injected.code, Some(injected.turn)));
    }

    #[test]
    fn iou_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = tokroute_core::synth::random_region(&mut rng);
        let b = tokroute_core::synth::random_region(&mut rng);
        prop_assert_eq!(region_iou(&a, &b), region_iou(&b, &a));
    }
}
