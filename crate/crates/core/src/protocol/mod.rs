//! The reply grammar: text interleaved with task spans `<Tag>payload</Tag>`
//! and grounding spans `<box>[x1,y1,x2,y2]</box>`.
//!
//! * Tag names come from [`TaskKind::tag`]; `box` is the grounding tag. Any
//!   other `<Name>` is an error, while a `<` that does not begin a
//!   well-formed tag is plain text.
//! * Task spans do not nest. Grounding spans hold only coordinates and may
//!   appear at top level or inside a task span.
//! * Regions serialize with exactly three decimals.
//!
//! Parsing is lexical: a task's `regions` are the boxes written inside its
//! span. [`tasks`] additionally attaches boxes that directly follow a span
//! (only whitespace between), which is what validation and routing use.

mod kind;
mod parser;
mod region;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kind::{MediaKind, TaskKind};
pub use parser::{
    parse, parse_stream, MalformedReason, MalformedToken, Mode, SpannedSegment, StreamState, GROUNDING_TAG,
    MAX_TAG_NAME,
};
pub use region::{parse_region, Region, RegionError};

pub use parser::contains_tag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Text {
        content: String,
    },
    Task {
        kind: TaskKind,
        payload: String,
        regions: Vec<Region>,
    },
    /// A grounding span outside any task span.
    Grounding { region: Region },
}

impl Segment {
    pub fn text(content: impl Into<String>) -> Self {
        Segment::Text {
            content: content.into(),
        }
    }

    pub fn task(kind: TaskKind, payload: impl Into<String>, regions: Vec<Region>) -> Self {
        Segment::Task {
            kind,
            payload: payload.into(),
            regions,
        }
    }
}

/// A reply split into segments. `spans[i]` is the byte range of `raw`
/// covered by `segments[i]`; the spans tile `raw` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedMessage {
    pub raw: String,
    pub segments: Vec<Segment>,
    pub spans: Vec<Range<usize>>,
}

impl ParsedMessage {
    /// Builds a message from segments, rendering `raw` canonically.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, InvalidSegment> {
        let (raw, spans) = render(&segments)?;
        Ok(Self { raw, segments, spans })
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Concatenated text segments, in order.
    pub fn plain_text(&self) -> String {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Text { content } => Some(content.as_str()),
                _ => None,
            })
            .collect()
    }

    fn offset_of(&self, index: usize) -> usize {
        self.spans.get(index).map_or(0, |r| r.start)
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("segment {index} cannot be serialized: {reason}")]
pub struct InvalidSegment {
    pub index: usize,
    pub reason: String,
}

/// Canonical text of a message. `parse(serialize(m))` reproduces
/// `m.segments` for every message whose regions lie on the 3-decimal grid.
pub fn serialize(msg: &ParsedMessage) -> Result<String, InvalidSegment> {
    render(&msg.segments).map(|(raw, _)| raw)
}

fn render(segments: &[Segment]) -> Result<(String, Vec<Range<usize>>), InvalidSegment> {
    let invalid = |index: usize, reason: String| InvalidSegment { index, reason };
    let mut out = String::new();
    let mut spans = Vec::with_capacity(segments.len());
    for (index, seg) in segments.iter().enumerate() {
        let start = out.len();
        match seg {
            Segment::Text { content } => {
                if content.is_empty() {
                    return Err(invalid(index, "empty text segment".into()));
                }
                if index > 0 && matches!(segments[index - 1], Segment::Text { .. }) {
                    return Err(invalid(index, "adjacent text segments".into()));
                }
                if contains_tag(content) {
                    return Err(invalid(index, "text contains a tag".into()));
                }
                out.push_str(content);
            }
            Segment::Task { kind, payload, regions } => {
                if contains_tag(payload) {
                    return Err(invalid(index, "task payload contains a tag".into()));
                }
                out.push('<');
                out.push_str(kind.tag());
                out.push('>');
                out.push_str(payload);
                for r in regions {
                    r.check().map_err(|e| invalid(index, e.to_string()))?;
                    push_box(&mut out, r);
                }
                out.push_str("</");
                out.push_str(kind.tag());
                out.push('>');
            }
            Segment::Grounding { region } => {
                region.check().map_err(|e| invalid(index, e.to_string()))?;
                push_box(&mut out, region);
            }
        }
        spans.push(start..out.len());
    }
    Ok((out, spans))
}

fn push_box(out: &mut String, r: &Region) {
    out.push_str("<box>");
    out.push_str(&r.to_canonical());
    out.push_str("</box>");
}

/// A task span together with every region associated with it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskView<'a> {
    /// Index of the task in `msg.segments`.
    pub segment: usize,
    pub offset: usize,
    pub kind: TaskKind,
    pub payload: &'a str,
    pub regions: Vec<Region>,
}

/// Task spans in lexical order. Each carries its inner regions followed by
/// the run of grounding segments right after it, where only whitespace-only
/// text may separate them.
pub fn tasks(msg: &ParsedMessage) -> Vec<TaskView<'_>> {
    let segs = &msg.segments;
    let mut out = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        let Segment::Task { kind, payload, regions } = seg else {
            continue;
        };
        let mut regions = regions.clone();
        let mut j = i + 1;
        while j < segs.len() {
            match &segs[j] {
                Segment::Grounding { region } => {
                    regions.push(*region);
                    j += 1;
                }
                Segment::Text { content }
                    if content.trim().is_empty()
                        && matches!(segs.get(j + 1), Some(Segment::Grounding { .. })) =>
                {
                    j += 1
                }
                _ => break,
            }
        }
        out.push(TaskView {
            segment: i,
            offset: msg.offset_of(i),
            kind: *kind,
            payload,
            regions,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    MalformedToken,
    InvalidRegion,
    MissingRegion,
}

/// A format problem found in a message. Serializes as
/// `{"code": ..., "offset": ..., "detail": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub offset: usize,
    pub detail: String,
}

impl From<&MalformedToken> for Violation {
    fn from(err: &MalformedToken) -> Self {
        let code = match err.reason {
            MalformedReason::InvalidRegion(_) => ViolationCode::InvalidRegion,
            _ => ViolationCode::MalformedToken,
        };
        Violation {
            code,
            offset: err.offset,
            detail: err.reason.to_string(),
        }
    }
}

/// Format violations of a message; empty iff it is well-formed and every
/// region-requiring task has at least one associated region.
pub fn validate(msg: &ParsedMessage) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (i, seg) in msg.segments.iter().enumerate() {
        let offset = msg.offset_of(i);
        let region_violation = |r: &Region| {
            r.check().err().map(|e| Violation {
                code: ViolationCode::InvalidRegion,
                offset,
                detail: e.to_string(),
            })
        };
        match seg {
            Segment::Text { content } => {
                if contains_tag(content) {
                    violations.push(Violation {
                        code: ViolationCode::MalformedToken,
                        offset,
                        detail: "tag inside a text segment".into(),
                    });
                }
            }
            Segment::Task { payload, regions, .. } => {
                if contains_tag(payload) {
                    violations.push(Violation {
                        code: ViolationCode::MalformedToken,
                        offset,
                        detail: "tag inside a task payload".into(),
                    });
                }
                violations.extend(regions.iter().filter_map(region_violation));
            }
            Segment::Grounding { region } => violations.extend(region_violation(region)),
        }
    }
    for t in tasks(msg) {
        if t.kind.requires_region() && t.regions.is_empty() {
            violations.push(Violation {
                code: ViolationCode::MissingRegion,
                offset: t.offset,
                detail: format!("<{}> needs a grounding region", t.kind.tag()),
            });
        }
    }
    violations.sort_by_key(|v| v.offset);
    violations
}

/// Parses and validates raw text in one step, reporting a parse failure
/// as a single violation.
pub fn check_text(text: &str) -> Vec<Violation> {
    match parse(text) {
        Ok(msg) => validate(&msg),
        Err(err) => vec![Violation::from(&err)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x1: f64, y1: f64, x2: f64, y2: f64) -> Region {
        Region::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn full_frame_grounding_serializes() {
        let m = ParsedMessage::from_segments(vec![Segment::Grounding { region: Region::FULL }]).unwrap();
        assert_eq!(m.raw, "<box>[0.000,0.000,1.000,1.000]</box>");
        assert_eq!(serialize(&m).unwrap(), m.raw);
    }

    #[test]
    fn plain_text_serializes_verbatim() {
        let m = ParsedMessage::from_segments(vec![Segment::text("hi")]).unwrap();
        assert_eq!(serialize(&m).unwrap(), "hi");
    }

    #[test]
    fn edit_example_round_trips() {
        let m = parse("Sure. <Edit>remove the dog</Edit><box>[0.320,0.410,0.780,0.950]</box>").unwrap();
        let text = serialize(&m).unwrap();
        assert_eq!(text, m.raw);
        assert_eq!(parse(&text).unwrap().segments, m.segments);
    }

    #[test]
    fn serializer_rejects_non_canonical_segments() {
        let bad = Region {
            x1: 0.6,
            y1: 0.0,
            x2: 0.5,
            y2: 1.0,
        };
        let cases = vec![
            vec![Segment::Grounding { region: bad }],
            vec![Segment::task(TaskKind::ImageSeg, "x", vec![bad])],
            vec![Segment::text("")],
            vec![Segment::text("a"), Segment::text("b")],
            vec![Segment::text("a <Gen>b</Gen>")],
            vec![Segment::task(TaskKind::ImageGen, "<box>", vec![])],
        ];
        for segs in cases {
            assert!(ParsedMessage::from_segments(segs).is_err());
        }
    }

    #[test]
    fn trailing_box_attaches_to_previous_task() {
        let m = parse("<Seg>the cat</Seg> \n<box>[0,0,0.5,0.5]</box><box>[0.5,0.5,1,1]</box> done").unwrap();
        let ts = tasks(&m);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].regions, vec![r(0.0, 0.0, 0.5, 0.5), r(0.5, 0.5, 1.0, 1.0)]);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn box_after_text_does_not_attach() {
        let m = parse("<Seg>the cat</Seg> there <box>[0,0,0.5,0.5]</box>").unwrap();
        assert!(tasks(&m)[0].regions.is_empty());
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::MissingRegion);
        assert_eq!(v[0].offset, 0);
    }

    #[test]
    fn validation_examples() {
        let ok = parse("Sure. <Edit>remove the dog</Edit><box>[0.320,0.410,0.780,0.950]</box>").unwrap();
        assert!(validate(&ok).is_empty());

        let seg = ParsedMessage::from_segments(vec![Segment::task(TaskKind::ImageSeg, "the cat", vec![])]).unwrap();
        let v = validate(&seg);
        assert_eq!(v.iter().map(|v| v.code).collect::<Vec<_>>(), vec![ViolationCode::MissingRegion]);

        let gen = ParsedMessage::from_segments(vec![Segment::task(TaskKind::ImageGen, "a sunset", vec![])]).unwrap();
        assert!(validate(&gen).is_empty());
    }

    #[test]
    fn validate_flags_hand_built_garbage() {
        let m = ParsedMessage {
            raw: String::new(),
            segments: vec![
                Segment::text("<Gen>"),
                Segment::Grounding {
                    region: Region { x1: 2.0, y1: 0.0, x2: 3.0, y2: 1.0 },
                },
            ],
            spans: vec![],
        };
        let codes: Vec<_> = validate(&m).into_iter().map(|v| v.code).collect();
        assert!(codes.contains(&ViolationCode::MalformedToken));
        assert!(codes.contains(&ViolationCode::InvalidRegion));
    }

    #[test]
    fn check_text_maps_parse_errors() {
        assert_eq!(check_text("<Edit>x")[0].code, ViolationCode::MalformedToken);
        assert_eq!(check_text("<box>[0,0,1.5,1]</box>")[0].code, ViolationCode::InvalidRegion);
        assert!(check_text("just words").is_empty());
    }

    #[test]
    fn violation_json_shape() {
        let v = &check_text("<Edit>x")[0];
        let json = serde_json::to_value(v).unwrap();
        assert_eq!(json["code"], "MalformedToken");
        assert_eq!(json["offset"], 0);
        assert!(json["detail"].as_str().unwrap().contains("never closed"));
    }
}
