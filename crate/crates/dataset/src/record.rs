use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tokroute_core::artifact::ArtifactRef;
use tokroute_core::protocol::{Region, TaskKind};

/// One caption from a grounding captioner, optionally with its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    /// Written as `[x1, y1, x2, y2]`.
    #[serde(
        rename = "box",
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_box",
        deserialize_with = "de_box"
    )]
    pub region: Option<Region>,
}

impl Caption {
    pub fn new(text: impl Into<String>, region: Option<Region>) -> Self {
        Self {
            text: text.into(),
            region,
        }
    }
}

fn ser_box<S: Serializer>(r: &Option<Region>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => [r.x1, r.y1, r.x2, r.y2].serialize(s),
        None => s.serialize_none(),
    }
}

fn de_box<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Region>, D::Error> {
    let raw: Option<[f64; 4]> = Option::deserialize(d)?;
    raw.map(|[x1, y1, x2, y2]| Region::new(x1, y1, x2, y2).map_err(serde::de::Error::custom))
        .transpose()
}

/// An input sample: an image with grounded captions, tagged with the task
/// its source dataset was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub image_ref: ArtifactRef,
    pub captions: Vec<Caption>,
    pub source_task: TaskKind,
    pub source_dataset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

impl Turn {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub turns: Vec<Turn>,
    pub task_kinds: BTreeSet<TaskKind>,
}

impl ConversationRecord {
    pub fn assistant_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::Assistant)
    }
}
