//! Unified-format conversation datasets: sample conversion, templated
//! multi-turn synthesis, the format filter, and corpus statistics.

pub mod build;
pub mod fault;
pub mod filter;
pub mod iou;
pub mod jsonl;
pub mod record;
pub mod stats;
pub mod synth;
pub mod template;

use thiserror::Error;
use tokroute_core::protocol::TaskKind;

pub use build::{build_multiturn, convert_sample, DialogueAuthor, TemplateAuthor};
pub use fault::{inject, Fault, Injected};
pub use filter::{filter_records, first_violation, partition_records, FilterReport, RecordViolation, RejectCode};
pub use iou::region_iou;
pub use record::{AnnotatedSample, Caption, ConversationRecord, Role, Turn};
pub use stats::{dataset_stats, DatasetStats};
pub use template::{Template, TemplateSet};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no template {template:?} for {kind}")]
    TemplateMissing { kind: TaskKind, template: String },
    #[error("template {template:?} needs a caption with a box")]
    RegionRequired { template: String },
    #[error("sample has no captions")]
    InsufficientCaptions,
    #[error("a dialogue needs at least one turn")]
    InvalidTurns,
    #[error("caption {0:?} cannot be embedded in a reply")]
    InvalidCaption(String),
    #[error("template {id:?}: {reason}")]
    Template { id: String, reason: String },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("bad header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
