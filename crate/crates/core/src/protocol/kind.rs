use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Output modality of an expert invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
    Audio,
    Mask,
    Layout,
}

impl MediaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
            MediaKind::Audio => "audio",
            MediaKind::Mask => "mask",
            MediaKind::Layout => "layout",
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The closed set of tasks a model reply can request.
///
/// Each kind has exactly one tag name used in `<Tag>...</Tag>` spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    ImageGen,
    LayoutGen,
    ImageEditGlobal,
    ImageEditRegion,
    ImageSeg,
    VideoSeg,
    VideoGen,
    VideoEdit,
    ImageToVideo,
    AudioGen,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::ImageGen,
        TaskKind::LayoutGen,
        TaskKind::ImageEditGlobal,
        TaskKind::ImageEditRegion,
        TaskKind::ImageSeg,
        TaskKind::VideoSeg,
        TaskKind::VideoGen,
        TaskKind::VideoEdit,
        TaskKind::ImageToVideo,
        TaskKind::AudioGen,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TaskKind::ImageGen => "Gen",
            TaskKind::LayoutGen => "Layout",
            TaskKind::ImageEditGlobal => "GlobalEdit",
            TaskKind::ImageEditRegion => "Edit",
            TaskKind::ImageSeg => "Seg",
            TaskKind::VideoSeg => "VideoSeg",
            TaskKind::VideoGen => "VideoGen",
            TaskKind::VideoEdit => "VideoEdit",
            TaskKind::ImageToVideo => "Animate",
            TaskKind::AudioGen => "AudioGen",
        }
    }

    pub fn from_tag(tag: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ImageGen => "ImageGen",
            TaskKind::LayoutGen => "LayoutGen",
            TaskKind::ImageEditGlobal => "ImageEditGlobal",
            TaskKind::ImageEditRegion => "ImageEditRegion",
            TaskKind::ImageSeg => "ImageSeg",
            TaskKind::VideoSeg => "VideoSeg",
            TaskKind::VideoGen => "VideoGen",
            TaskKind::VideoEdit => "VideoEdit",
            TaskKind::ImageToVideo => "ImageToVideo",
            TaskKind::AudioGen => "AudioGen",
        }
    }

    /// Kinds that are meaningless without at least one grounding region.
    pub fn requires_region(self) -> bool {
        matches!(
            self,
            TaskKind::ImageEditRegion | TaskKind::ImageSeg | TaskKind::VideoSeg | TaskKind::LayoutGen
        )
    }

    pub fn output_media(self) -> MediaKind {
        match self {
            TaskKind::ImageGen | TaskKind::ImageEditGlobal | TaskKind::ImageEditRegion => MediaKind::Image,
            TaskKind::LayoutGen => MediaKind::Layout,
            TaskKind::ImageSeg | TaskKind::VideoSeg => MediaKind::Mask,
            TaskKind::VideoGen | TaskKind::VideoEdit | TaskKind::ImageToVideo => MediaKind::Video,
            TaskKind::AudioGen => MediaKind::Audio,
        }
    }

    /// The media an invocation of this kind consumes from the session, if any.
    pub fn input_media(self) -> Option<MediaKind> {
        match self {
            TaskKind::ImageEditGlobal
            | TaskKind::ImageEditRegion
            | TaskKind::ImageSeg
            | TaskKind::ImageToVideo => Some(MediaKind::Image),
            TaskKind::VideoEdit | TaskKind::VideoSeg => Some(MediaKind::Video),
            TaskKind::ImageGen | TaskKind::LayoutGen | TaskKind::VideoGen | TaskKind::AudioGen => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    /// Accepts either the kind name (`ImageSeg`) or its tag (`Seg`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or_else(|| TaskKind::from_tag(s))
            .ok_or_else(|| format!("unknown task kind {s:?}"))
    }
}
