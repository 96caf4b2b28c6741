//! The format gate: a record is kept iff its roles alternate user,
//! assistant, ... ending on an assistant turn, and every assistant turn
//! parses and validates with no violations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tokroute_core::protocol::{check_text, ViolationCode};

use crate::record::{ConversationRecord, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectCode {
    MalformedToken,
    InvalidRegion,
    MissingRegion,
    RoleOrder,
    EmptyRecord,
}

impl From<ViolationCode> for RejectCode {
    fn from(c: ViolationCode) -> Self {
        match c {
            ViolationCode::MalformedToken => RejectCode::MalformedToken,
            ViolationCode::InvalidRegion => RejectCode::InvalidRegion,
            ViolationCode::MissingRegion => RejectCode::MissingRegion,
        }
    }
}

/// The first problem found in a record, scanning turns in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordViolation {
    pub code: RejectCode,
    /// Index into `turns`; `None` for problems with the record as a whole.
    pub turn: Option<usize>,
    /// Byte offset within the turn's content, for token violations.
    pub offset: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub violation: RecordViolation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub rejected: Vec<Rejection>,
}

/// `None` if the record passes the filter.
pub fn first_violation(rec: &ConversationRecord) -> Option<RecordViolation> {
    if rec.turns.is_empty() {
        return Some(RecordViolation {
            code: RejectCode::EmptyRecord,
            turn: None,
            offset: None,
            detail: "record has no turns".into(),
        });
    }
    for (i, turn) in rec.turns.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if turn.role != expected {
            return Some(RecordViolation {
                code: RejectCode::RoleOrder,
                turn: Some(i),
                offset: None,
                detail: format!("turn {i} should be {expected:?}, found {:?}", turn.role),
            });
        }
        if turn.role == Role::Assistant {
            if let Some(v) = check_text(&turn.content).into_iter().next() {
                return Some(RecordViolation {
                    code: v.code.into(),
                    turn: Some(i),
                    offset: Some(v.offset),
                    detail: v.detail,
                });
            }
        }
    }
    if rec.turns.len() % 2 == 1 {
        return Some(RecordViolation {
            code: RejectCode::RoleOrder,
            turn: Some(rec.turns.len() - 1),
            offset: None,
            detail: "conversation ends without an assistant reply".into(),
        });
    }
    None
}

pub fn filter_records(records: &[ConversationRecord]) -> FilterReport {
    partition_records(records).1
}

/// Kept records, in input order, plus the report.
pub fn partition_records(records: &[ConversationRecord]) -> (Vec<ConversationRecord>, FilterReport) {
    let verdicts: Vec<Option<RecordViolation>> = records.par_iter().map(first_violation).collect();
    let mut kept = Vec::new();
    let mut report = FilterReport::default();
    for (rec, verdict) in records.iter().zip(verdicts) {
        match verdict {
            None => {
                report.kept += 1;
                kept.push(rec.clone());
            }
            Some(violation) => report.rejected.push(Rejection {
                id: rec.id.clone(),
                violation,
            }),
        }
    }
    (kept, report)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::record::Turn;

    fn rec(turns: Vec<Turn>) -> ConversationRecord {
        ConversationRecord {
            id: "r".into(),
            turns,
            task_kinds: BTreeSet::new(),
        }
    }

    #[test]
    fn well_formed_record_is_kept() {
        let r = rec(vec![
            Turn::user("remove the dog"),
            Turn::assistant("Sure. <Edit>remove the dog</Edit><box>[0.1,0.1,0.5,0.5]</box>"),
        ]);
        assert_eq!(first_violation(&r), None);
        assert_eq!(filter_records(&[r]).kept, 1);
    }

    #[test]
    fn unclosed_edit_is_malformed() {
        let r = rec(vec![Turn::user("u"), Turn::assistant("<Edit>remove the dog")]);
        let v = first_violation(&r).unwrap();
        assert_eq!(v.code, RejectCode::MalformedToken);
        assert_eq!(v.turn, Some(1));
    }

    #[test]
    fn other_rejections() {
        let cases = [
            (vec![], RejectCode::EmptyRecord),
            (vec![Turn::assistant("hi"), Turn::user("hi")], RejectCode::RoleOrder),
            (vec![Turn::user("a"), Turn::assistant("b"), Turn::user("c")], RejectCode::RoleOrder),
            (
                vec![Turn::user("a"), Turn::assistant("<Seg>dog</Seg>")],
                RejectCode::MissingRegion,
            ),
            (
                vec![Turn::user("a"), Turn::assistant("<Seg>dog</Seg><box>[0.5,0,0.2,1]</box>")],
                RejectCode::InvalidRegion,
            ),
        ];
        for (turns, code) in cases {
            assert_eq!(first_violation(&rec(turns.clone())).unwrap().code, code, "{turns:?}");
        }
    }

    #[test]
    fn user_turns_are_not_parsed() {
        let r = rec(vec![Turn::user("<Edit> unbalanced"), Turn::assistant("ok")]);
        assert_eq!(first_violation(&r), None);
    }

    #[test]
    fn report_partitions_input() {
        let good = rec(vec![Turn::user("a"), Turn::assistant("b")]);
        let bad = rec(vec![Turn::user("a")]);
        let report = filter_records(&[good.clone(), bad, good]);
        assert_eq!(report.kept + report.rejected.len(), 3);
        assert_eq!(report.kept, 2);
    }
}
