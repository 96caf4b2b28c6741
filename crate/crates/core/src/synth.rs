//! Seeded generators for protocol messages, noisy inputs and chunkings.
//! Used by property tests, the acceptance suite and load tests.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::protocol::{contains_tag, ParsedMessage, Region, Segment, TaskKind};

const WORDS: &[&str] = &[
    "the", "dog", "red", "car", "sunset", "over", "a", "lake", "remove", "add", "hat", "cat", "make", "it",
    "snowy", "🌅", "café", "x<y", "a > b", "</", "<", "<3", "[0.1]", "naïve", "路", "\n", "\t",
];

/// Noise fragments biased toward tag-like material so both parse successes
/// and every error path get exercised.
const FRAGMENTS: &[&str] = &[
    "<", ">", "/", "</", "<Edit>", "</Edit>", "<Seg>", "</Seg>", "<Gen>", "</Gen>", "<box>", "</box>",
    "<Foo>", "<VideoGen>", "</VideoGen>", "[0.1,0.2,0.3,0.4]", "[0.5,0.5,0.2,0.9]", "[1.2,0,0,0]", "[",
    "]", ",", "0.25", "a", "b", " ", "é", "🌅", "\n", "<Animate>", "</Animate>", "<Ed", "it>",
];

#[derive(Debug, Clone, Copy)]
pub struct MessageOptions {
    pub max_segments: usize,
    pub max_regions: usize,
    /// Give every region-requiring task a region so the message validates.
    pub validating: bool,
}

impl Default for MessageOptions {
    fn default() -> Self {
        Self {
            max_segments: 8,
            max_regions: 3,
            validating: false,
        }
    }
}

/// A region on the 3-decimal wire grid.
pub fn random_region<R: Rng + ?Sized>(rng: &mut R) -> Region {
    let mut a = rng.random_range(0..=1000u32);
    let mut b = rng.random_range(0..=1000u32);
    let mut c = rng.random_range(0..=1000u32);
    let mut d = rng.random_range(0..=1000u32);
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    if d < c {
        std::mem::swap(&mut c, &mut d);
    }
    let f = |v: u32| v as f64 / 1000.0;
    Region::new(f(a), f(c), f(b), f(d)).expect("ordered grid values are valid")
}

/// Tag-free text of one or more words.
pub fn random_text<R: Rng + ?Sized>(rng: &mut R, allow_empty: bool) -> String {
    let lo = if allow_empty { 0 } else { 1 };
    let n = rng.random_range(lo..=5);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 && rng.random_bool(0.7) {
            out.push(' ');
        }
        out.push_str(WORDS.choose(rng).expect("nonempty"));
    }
    if contains_tag(&out) {
        out = out.replace('<', "‹");
    }
    out
}

/// A canonical message: no empty or adjacent text segments, tag-free text
/// and payloads, grid-aligned regions.
pub fn random_message<R: Rng + ?Sized>(rng: &mut R, opts: MessageOptions) -> ParsedMessage {
    let n = rng.random_range(0..=opts.max_segments);
    let mut segments: Vec<Segment> = Vec::with_capacity(n);
    for _ in 0..n {
        let prev_is_text = matches!(segments.last(), Some(Segment::Text { .. }));
        let roll = rng.random_range(0..10);
        let seg = if roll < 4 && !prev_is_text {
            Segment::text(random_text(rng, false))
        } else if roll < 8 || prev_is_text && roll < 9 {
            let kind = *TaskKind::ALL.choose(rng).expect("nonempty");
            let lo = usize::from(opts.validating && kind.requires_region());
            let count = rng.random_range(lo..=opts.max_regions.max(lo));
            let regions = (0..count).map(|_| random_region(rng)).collect();
            Segment::task(kind, random_text(rng, true), regions)
        } else {
            Segment::Grounding {
                region: random_region(rng),
            }
        };
        segments.push(seg);
    }
    ParsedMessage::from_segments(segments).expect("generator emits canonical segments")
}

/// Random input text built from tag-heavy fragments.
pub fn random_noise<R: Rng + ?Sized>(rng: &mut R, max_fragments: usize) -> String {
    let n = rng.random_range(0..=max_fragments);
    (0..n).map(|_| *FRAGMENTS.choose(rng).expect("nonempty")).collect()
}

/// Splits `s` into chunks at random char boundaries. Empty chunks are
/// allowed.
pub fn random_chunking<'a, R: Rng + ?Sized>(rng: &mut R, s: &'a str) -> Vec<&'a str> {
    let boundaries: Vec<usize> = s.char_indices().map(|(i, _)| i).skip(1).collect();
    let mut cuts: Vec<usize> = boundaries.into_iter().filter(|_| rng.random_bool(0.3)).collect();
    if rng.random_bool(0.2) {
        cuts.insert(0, 0);
    }
    cuts.push(s.len());
    let mut out = Vec::with_capacity(cuts.len());
    let mut start = 0;
    for c in cuts {
        out.push(&s[start..c]);
        start = c;
    }
    out
}
