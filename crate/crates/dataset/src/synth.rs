//! Random annotated samples for property tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use tokroute_core::artifact::ArtifactRef;
use tokroute_core::protocol::{MediaKind, TaskKind};
use tokroute_core::synth::{random_region, random_text};

use crate::record::{AnnotatedSample, Caption};

/// A sample with 1 to 4 captions. When the source task needs a region, at
/// least one caption carries a box.
pub fn random_sample<R: Rng + ?Sized>(rng: &mut R) -> AnnotatedSample {
    let source_task = *TaskKind::ALL.choose(rng).expect("nonempty");
    let n = rng.random_range(1..=4);
    let mut captions: Vec<Caption> = (0..n)
        .map(|_| {
            let region = rng.random_bool(0.5).then(|| random_region(rng));
            Caption::new(random_text(rng, true), region)
        })
        .collect();
    if source_task.requires_region() && captions.iter().all(|c| c.region.is_none()) {
        let i = rng.random_range(0..captions.len());
        captions[i].region = Some(random_region(rng));
    }
    let id: u64 = rng.random();
    AnnotatedSample {
        image_ref: ArtifactRef::for_bytes(&id.to_le_bytes(), MediaKind::Image),
        captions,
        source_task,
        source_dataset: "synthetic".into(),
    }
}
