//! Batch and incremental parsing of model replies.
//!
//! Batch [`parse`] is a single [`StreamState::feed`] followed by
//! [`StreamState::finish`], so the two can only diverge through buffering
//! across chunk boundaries. The only lookahead in the grammar is deciding
//! whether a `<` starts a tag; an undecided `<...` suffix stays in the
//! pending buffer until more input or end of stream resolves it.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use super::kind::TaskKind;
use super::region::{parse_region, Region, RegionError};
use super::{ParsedMessage, Segment};

/// Tag names longer than this are not treated as tags.
pub const MAX_TAG_NAME: usize = 64;

pub const GROUNDING_TAG: &str = "box";

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("malformed token at byte {offset}: {reason}")]
pub struct MalformedToken {
    pub offset: usize,
    pub reason: MalformedReason,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MalformedReason {
    #[error("unknown tag <{name}>")]
    UnknownTag { name: String },
    #[error("closing tag </{name}> without a matching open tag")]
    UnmatchedClose { name: String },
    #[error("expected </{expected}>, found </{found}>")]
    MismatchedClose { expected: String, found: String },
    #[error("task tag <{inner}> nested inside <{outer}>")]
    NestedTask { outer: String, inner: String },
    #[error("tag <{tag}> inside a grounding span")]
    TagInGrounding { tag: String },
    #[error("<{name}> is never closed")]
    Unclosed { name: String },
    #[error("invalid region: {0}")]
    InvalidRegion(RegionError),
}

fn malformed(offset: usize, reason: MalformedReason) -> MalformedToken {
    MalformedToken { offset, reason }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Tag<'a> {
    pub closing: bool,
    pub name: &'a str,
    /// Byte length of the whole tag including `<` and `>`.
    pub len: usize,
}

impl Tag<'_> {
    fn display(&self) -> String {
        if self.closing {
            format!("/{}", self.name)
        } else {
            self.name.to_string()
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Probe<'a> {
    Tag(Tag<'a>),
    NotTag,
    Incomplete,
}

/// Decides whether `s` (which starts with `<`) begins a tag
/// `<[/]Name>` with `Name = [A-Za-z][A-Za-z0-9_]*`.
pub(crate) fn probe_tag(s: &str, at_eof: bool) -> Probe<'_> {
    debug_assert!(s.starts_with('<'));
    let bytes = s.as_bytes();
    let incomplete = if at_eof { Probe::NotTag } else { Probe::Incomplete };
    let mut i = 1;
    let closing = match bytes.get(i) {
        None => return incomplete,
        Some(b'/') => {
            i += 1;
            true
        }
        Some(_) => false,
    };
    let name_start = i;
    match bytes.get(i) {
        None => return incomplete,
        Some(b) if b.is_ascii_alphabetic() => i += 1,
        Some(_) => return Probe::NotTag,
    }
    loop {
        if i - name_start > MAX_TAG_NAME {
            return Probe::NotTag;
        }
        match bytes.get(i) {
            None => return incomplete,
            Some(b) if b.is_ascii_alphanumeric() || *b == b'_' => i += 1,
            Some(b'>') => {
                return Probe::Tag(Tag {
                    closing,
                    name: &s[name_start..i],
                    len: i + 1,
                })
            }
            Some(_) => return Probe::NotTag,
        }
    }
}

/// True when `s` contains anything the lexer would read as a tag.
pub fn contains_tag(s: &str) -> bool {
    s.match_indices('<')
        .any(|(i, _)| matches!(probe_tag(&s[i..], true), Probe::Tag(_)))
}

#[derive(Debug, Clone, PartialEq)]
struct TaskFrame {
    kind: TaskKind,
    open_at: usize,
    payload: String,
    regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq)]
struct BoxFrame {
    open_at: usize,
    body: String,
}

/// Which construct the parser is inside of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InText,
    InOpenTag,
    InTaskSpan,
    InGroundingSpan,
}

/// Incremental parser state. Owned by one stream at a time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamState {
    /// Unconsumed input; at most an undecided `<...` prefix between calls.
    pending: String,
    /// Absolute byte offset of `pending[0]`.
    offset: usize,
    text: String,
    text_at: usize,
    task: Option<TaskFrame>,
    grounding: Option<BoxFrame>,
    failed: Option<MalformedToken>,
    finished: bool,
}

/// A segment plus the byte range of the input it covers.
pub type SpannedSegment = (Segment, Range<usize>);

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mode(&self) -> Mode {
        if self.grounding.is_some() {
            Mode::InGroundingSpan
        } else if self.task.is_some() {
            Mode::InTaskSpan
        } else if self.pending.starts_with('<') {
            Mode::InOpenTag
        } else {
            Mode::InText
        }
    }

    /// Bytes consumed so far, including buffered ones.
    pub fn position(&self) -> usize {
        self.offset + self.pending.len()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Consumes `chunk` and returns every segment whose end is now known.
    pub fn feed(&mut self, chunk: &str) -> Result<Vec<Segment>, MalformedToken> {
        Ok(self.feed_spanned(chunk)?.into_iter().map(|(s, _)| s).collect())
    }

    /// Ends the stream: emits trailing text or reports a dangling span.
    pub fn finish(&mut self) -> Result<Vec<Segment>, MalformedToken> {
        Ok(self.finish_spanned()?.into_iter().map(|(s, _)| s).collect())
    }

    pub fn feed_spanned(&mut self, chunk: &str) -> Result<Vec<SpannedSegment>, MalformedToken> {
        self.check_usable()?;
        self.pending.push_str(chunk);
        let mut out = Vec::new();
        self.run(false, &mut out).inspect_err(|e| self.failed = Some(e.clone()))?;
        Ok(out)
    }

    pub fn finish_spanned(&mut self) -> Result<Vec<SpannedSegment>, MalformedToken> {
        self.check_usable()?;
        let mut out = Vec::new();
        let result = self.run(true, &mut out).and_then(|()| self.close(&mut out));
        result.inspect_err(|e| self.failed = Some(e.clone()))?;
        self.finished = true;
        Ok(out)
    }

    fn check_usable(&self) -> Result<(), MalformedToken> {
        if let Some(err) = &self.failed {
            return Err(err.clone());
        }
        assert!(!self.finished, "stream already finished");
        Ok(())
    }

    fn sink(&mut self) -> &mut String {
        if let Some(b) = &mut self.grounding {
            &mut b.body
        } else if let Some(t) = &mut self.task {
            &mut t.payload
        } else {
            &mut self.text
        }
    }

    fn run(&mut self, at_eof: bool, out: &mut Vec<SpannedSegment>) -> Result<(), MalformedToken> {
        let pending = std::mem::take(&mut self.pending);
        let mut pos = 0;
        while pos < pending.len() {
            let rest = &pending[pos..];
            let Some(lt) = rest.find('<') else {
                self.sink().push_str(rest);
                pos = pending.len();
                break;
            };
            self.sink().push_str(&rest[..lt]);
            pos += lt;
            match probe_tag(&pending[pos..], at_eof) {
                Probe::Incomplete => break,
                Probe::NotTag => {
                    self.sink().push('<');
                    pos += 1;
                }
                Probe::Tag(tag) => {
                    let at = self.offset + pos;
                    self.on_tag(tag, at, out)?;
                    pos += tag.len;
                }
            }
        }
        self.offset += pos;
        self.pending = pending[pos..].to_string();
        Ok(())
    }

    fn on_tag(&mut self, tag: Tag<'_>, at: usize, out: &mut Vec<SpannedSegment>) -> Result<(), MalformedToken> {
        let end = at + tag.len;
        let kind = if tag.name == GROUNDING_TAG {
            None
        } else {
            match TaskKind::from_tag(tag.name) {
                Some(k) => Some(k),
                None => {
                    return Err(malformed(
                        at,
                        MalformedReason::UnknownTag {
                            name: tag.display(),
                        },
                    ))
                }
            }
        };

        if let Some(frame) = &self.grounding {
            if kind.is_none() && tag.closing {
                let region = parse_region(&frame.body)
                    .map_err(|e| malformed(frame.open_at, MalformedReason::InvalidRegion(e)))?;
                let open_at = frame.open_at;
                self.grounding = None;
                match &mut self.task {
                    Some(task) => task.regions.push(region),
                    None => {
                        out.push((Segment::Grounding { region }, open_at..end));
                        self.text_at = end;
                    }
                }
                return Ok(());
            }
            return Err(malformed(
                at,
                MalformedReason::TagInGrounding {
                    tag: tag.display(),
                },
            ));
        }

        match (kind, tag.closing) {
            (None, false) => {
                if self.task.is_none() {
                    self.flush_text(at, out);
                }
                self.grounding = Some(BoxFrame {
                    open_at: at,
                    body: String::new(),
                });
            }
            (None, true) => {
                return Err(malformed(
                    at,
                    MalformedReason::UnmatchedClose {
                        name: GROUNDING_TAG.into(),
                    },
                ))
            }
            (Some(kind), false) => {
                if let Some(outer) = &self.task {
                    return Err(malformed(
                        at,
                        MalformedReason::NestedTask {
                            outer: outer.kind.tag().into(),
                            inner: kind.tag().into(),
                        },
                    ));
                }
                self.flush_text(at, out);
                self.task = Some(TaskFrame {
                    kind,
                    open_at: at,
                    payload: String::new(),
                    regions: Vec::new(),
                });
            }
            (Some(kind), true) => match self.task.take() {
                Some(frame) if frame.kind == kind => {
                    out.push((
                        Segment::Task {
                            kind,
                            payload: frame.payload,
                            regions: frame.regions,
                        },
                        frame.open_at..end,
                    ));
                    self.text_at = end;
                }
                Some(frame) => {
                    return Err(malformed(
                        at,
                        MalformedReason::MismatchedClose {
                            expected: frame.kind.tag().into(),
                            found: kind.tag().into(),
                        },
                    ))
                }
                None => {
                    return Err(malformed(
                        at,
                        MalformedReason::UnmatchedClose {
                            name: kind.tag().into(),
                        },
                    ))
                }
            },
        }
        Ok(())
    }

    fn flush_text(&mut self, upto: usize, out: &mut Vec<SpannedSegment>) {
        if !self.text.is_empty() {
            let content = std::mem::take(&mut self.text);
            out.push((Segment::Text { content }, self.text_at..upto));
        }
        self.text_at = upto;
    }

    fn close(&mut self, out: &mut Vec<SpannedSegment>) -> Result<(), MalformedToken> {
        if let Some(frame) = &self.grounding {
            return Err(malformed(
                frame.open_at,
                MalformedReason::Unclosed {
                    name: GROUNDING_TAG.into(),
                },
            ));
        }
        if let Some(frame) = &self.task {
            return Err(malformed(
                frame.open_at,
                MalformedReason::Unclosed {
                    name: frame.kind.tag().into(),
                },
            ));
        }
        let end = self.position();
        self.flush_text(end, out);
        Ok(())
    }
}

/// Parses a complete model reply.
pub fn parse(text: &str) -> Result<ParsedMessage, MalformedToken> {
    let mut state = StreamState::new();
    let mut spanned = state.feed_spanned(text)?;
    spanned.extend(state.finish_spanned()?);
    let (segments, spans) = spanned.into_iter().unzip();
    Ok(ParsedMessage {
        raw: text.to_string(),
        segments,
        spans,
    })
}

/// Functional form of the incremental parser: feeds `chunk`, and when
/// `end_of_stream` is set, flushes the stream as well.
pub fn parse_stream(
    chunk: &str,
    end_of_stream: bool,
    mut state: StreamState,
) -> Result<(Vec<Segment>, StreamState), MalformedToken> {
    let mut emitted = state.feed(chunk)?;
    if end_of_stream {
        emitted.extend(state.finish()?);
    }
    Ok((emitted, state))
}
