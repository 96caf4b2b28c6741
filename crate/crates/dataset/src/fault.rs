//! Corrupts well-formed records in ways the filter must catch, recording
//! the violation each corruption is expected to produce.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokroute_core::protocol::{parse, Segment};

use crate::filter::RejectCode;
use crate::record::{ConversationRecord, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fault {
    /// Delete one closing tag from an assistant turn.
    TagDrop,
    /// Make one grounding box out of range or inverted.
    BoundBreak,
    /// Swap the roles of one user/assistant exchange.
    RoleSwap,
}

impl Fault {
    pub const ALL: [Fault; 3] = [Fault::TagDrop, Fault::BoundBreak, Fault::RoleSwap];

    pub fn expected_code(self) -> RejectCode {
        match self {
            Fault::TagDrop => RejectCode::MalformedToken,
            Fault::BoundBreak => RejectCode::InvalidRegion,
            Fault::RoleSwap => RejectCode::RoleOrder,
        }
    }
}

/// Ground truth for one corrupted record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injected {
    pub fault: Fault,
    pub code: RejectCode,
    pub turn: usize,
}

fn assistant_turns(rec: &ConversationRecord) -> Vec<usize> {
    rec.turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.role == Role::Assistant)
        .map(|(i, _)| i)
        .collect()
}

/// Closing-tag byte ranges of a well-formed message.
fn closing_tags(content: &str) -> Vec<std::ops::Range<usize>> {
    let Ok(msg) = parse(content) else {
        return Vec::new();
    };
    msg.segments
        .iter()
        .zip(&msg.spans)
        .filter_map(|(seg, span)| {
            let close_len = match seg {
                Segment::Task { kind, .. } => kind.tag().len() + 3,
                Segment::Grounding { .. } => "</box>".len(),
                Segment::Text { .. } => return None,
            };
            Some(span.end - close_len..span.end)
        })
        .collect()
}

fn broken_box<R: Rng + ?Sized>(rng: &mut R) -> String {
    let milli = |rng: &mut R, lo: u32, hi: u32| rng.random_range(lo..=hi) as f64 / 1000.0;
    let lo = milli(rng, 0, 499);
    let hi = milli(rng, 501, 1000);
    let off = milli(rng, 1, 999);
    match rng.random_range(0..3) {
        0 => format!("[{lo:.3},{lo:.3},{:.3},{hi:.3}]", 1.0 + off),
        1 => format!("[{lo:.3},{:.3},{hi:.3},{hi:.3}]", -off),
        _ => format!("[{hi:.3},{lo:.3},{lo:.3},{hi:.3}]"),
    }
}

/// Applies `fault` to a record that passes the filter. Returns `None` when
/// the record offers nothing to corrupt (no closing tag for `TagDrop`, no
/// assistant turn at all).
pub fn inject<R: Rng + ?Sized>(rec: &ConversationRecord, fault: Fault, rng: &mut R) -> Option<(ConversationRecord, Injected)> {
    let mut out = rec.clone();
    let assistants = assistant_turns(rec);
    let turn = match fault {
        Fault::TagDrop => {
            let candidates: Vec<(usize, std::ops::Range<usize>)> = assistants
                .iter()
                .flat_map(|&i| closing_tags(&rec.turns[i].content).into_iter().map(move |r| (i, r)))
                .collect();
            let (i, range) = candidates.choose(rng)?.clone();
            out.turns[i].content.replace_range(range, "");
            i
        }
        Fault::BoundBreak => {
            let i = *assistants.choose(rng)?;
            let content = &rec.turns[i].content;
            let boxes: Vec<usize> = content.match_indices("<box>").map(|(p, _)| p + 5).collect();
            let replacement = broken_box(rng);
            match boxes.choose(rng) {
                Some(&start) => {
                    let end = start + content[start..].find("</box>").expect("well-formed box closes");
                    out.turns[i].content.replace_range(start..end, &replacement);
                }
                None => out.turns[i].content.push_str(&format!("<box>{replacement}</box>")),
            }
            i
        }
        Fault::RoleSwap => {
            let i = *assistants.choose(rng)?;
            out.turns[i].role = Role::User;
            out.turns[i - 1].role = Role::Assistant;
            i - 1
        }
    };
    Some((
        out,
        Injected {
            fault,
            code: fault.expected_code(),
            turn,
        },
    ))
}
