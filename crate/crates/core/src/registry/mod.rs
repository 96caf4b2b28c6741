//! Expert descriptors keyed by task kind, and the backends that execute
//! invocations.

mod config;
mod mock;
mod remote;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactRef;
use crate::protocol::{MediaKind, Region, TaskKind};

pub use config::{BackendConfig, ConfigError, ExpertConfig, RegistryConfig};
pub use mock::{mock_execute, rasterize, MockBackend, DEFAULT_MASK_GRID};
pub use remote::{RemoteBackend, RemoteRequest, RemoteResponse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock {
        seed: u64,
        mask_grid: usize,
    },
    Remote {
        endpoint: String,
        timeout_ms: u64,
        max_retries: u32,
        backoff_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDescriptor {
    pub name: String,
    pub supported_kinds: BTreeSet<TaskKind>,
    pub backend: BackendSpec,
}

impl ExpertDescriptor {
    pub fn mock(name: impl Into<String>, kinds: impl IntoIterator<Item = TaskKind>, seed: u64) -> Self {
        Self {
            name: name.into(),
            supported_kinds: kinds.into_iter().collect(),
            backend: BackendSpec::Mock {
                seed,
                mask_grid: DEFAULT_MASK_GRID,
            },
        }
    }
}

/// One invocation with every input resolved to a concrete artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRequest {
    pub kind: TaskKind,
    pub prompt: String,
    pub regions: Vec<Region>,
    pub input_artifacts: Vec<ArtifactRef>,
    pub idempotency_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutItem {
    pub label: String,
    pub region: Region,
}

/// Boolean raster of the requested regions. `rows[j]` is row `j` from the
/// top, one `'1'` or `'0'` per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub size: usize,
    pub rows: Vec<String>,
}

impl MaskGrid {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.rows[row].as_bytes()[col] == b'1'
    }

    pub fn count(&self) -> usize {
        self.rows.iter().map(|r| r.bytes().filter(|&b| b == b'1').count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputPayload {
    Artifact { artifact: ArtifactRef },
    Mask { artifact: ArtifactRef, grid: MaskGrid },
    Layout { items: Vec<LayoutItem> },
}

impl OutputPayload {
    pub fn media(&self) -> MediaKind {
        match self {
            OutputPayload::Artifact { artifact } => artifact.media,
            OutputPayload::Mask { .. } => MediaKind::Mask,
            OutputPayload::Layout { .. } => MediaKind::Layout,
        }
    }

    pub fn artifact(&self) -> Option<&ArtifactRef> {
        match self {
            OutputPayload::Artifact { artifact } | OutputPayload::Mask { artifact, .. } => Some(artifact),
            OutputPayload::Layout { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertOutput {
    pub payload: OutputPayload,
    pub latency_ms: u64,
    pub expert_name: String,
}

impl ExpertOutput {
    pub fn artifact(&self) -> Option<&ArtifactRef> {
        self.payload.artifact()
    }
}

/// What a backend hands back: the output plus, optionally, the artifact
/// bytes so the caller can store them.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub output: ExpertOutput,
    pub data: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCode {
    /// The expert ran and reported a failure.
    ExpertError,
    /// Transport kept failing after every retry.
    RemoteTimeout,
    ExpertPanicked,
    /// The output does not match the task's modality or its bytes.
    InvalidOutput,
    /// An input this invocation consumes was never produced.
    DependencyFailed,
    StoreFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{code:?}: {detail}")]
pub struct ExpertFailure {
    pub code: FailureCode,
    pub detail: String,
}

impl ExpertFailure {
    pub fn new(code: FailureCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

#[async_trait]
pub trait ExpertBackend: Send + Sync {
    async fn execute(&self, req: &ExpertRequest) -> Result<BackendResponse, ExpertFailure>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{kind} is already served by {existing:?}")]
    DuplicateKind { kind: TaskKind, existing: String },
    #[error("expert {0:?} supports no task kinds")]
    EmptyKinds(String),
    #[error("expert name {0:?} is already registered")]
    DuplicateName(String),
    #[error("no expert registered for {0}")]
    NoExpertRegistered(TaskKind),
    #[error("expert {name:?}: {reason}")]
    InvalidBackend { name: String, reason: String },
}

pub struct RegisteredExpert {
    pub descriptor: ExpertDescriptor,
    pub backend: Arc<dyn ExpertBackend>,
}

/// Task kind to expert mapping. Each kind resolves to at most one expert.
#[derive(Default)]
pub struct ExpertRegistry {
    experts: Vec<RegisteredExpert>,
    by_kind: BTreeMap<TaskKind, usize>,
}

impl std::fmt::Debug for ExpertRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.experts.iter().map(|e| &e.descriptor)).finish()
    }
}

impl ExpertRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `d` with the backend its spec describes.
    pub fn register(&mut self, d: ExpertDescriptor) -> Result<(), RegistryError> {
        let backend: Arc<dyn ExpertBackend> = match &d.backend {
            BackendSpec::Mock { seed, mask_grid } => {
                if *mask_grid == 0 {
                    return Err(RegistryError::InvalidBackend {
                        name: d.name.clone(),
                        reason: "mask_grid must be positive".into(),
                    });
                }
                Arc::new(MockBackend::new(d.name.clone(), *seed, *mask_grid))
            }
            BackendSpec::Remote {
                endpoint,
                timeout_ms,
                max_retries,
                backoff_ms,
            } => Arc::new(
                RemoteBackend::new(
                    d.name.clone(),
                    endpoint,
                    Duration::from_millis(*timeout_ms),
                    *max_retries,
                    Duration::from_millis(*backoff_ms),
                )
                .map_err(|reason| RegistryError::InvalidBackend {
                    name: d.name.clone(),
                    reason,
                })?,
            ),
        };
        self.register_with_backend(d, backend)
    }

    /// Registers `d` served by an arbitrary backend.
    pub fn register_with_backend(
        &mut self,
        d: ExpertDescriptor,
        backend: Arc<dyn ExpertBackend>,
    ) -> Result<(), RegistryError> {
        if d.supported_kinds.is_empty() {
            return Err(RegistryError::EmptyKinds(d.name));
        }
        if self.experts.iter().any(|e| e.descriptor.name == d.name) {
            return Err(RegistryError::DuplicateName(d.name));
        }
        for kind in &d.supported_kinds {
            if let Some(&i) = self.by_kind.get(kind) {
                return Err(RegistryError::DuplicateKind {
                    kind: *kind,
                    existing: self.experts[i].descriptor.name.clone(),
                });
            }
        }
        let index = self.experts.len();
        for kind in &d.supported_kinds {
            self.by_kind.insert(*kind, index);
        }
        self.experts.push(RegisteredExpert { descriptor: d, backend });
        Ok(())
    }

    pub fn resolve(&self, kind: TaskKind) -> Option<&RegisteredExpert> {
        self.by_kind.get(&kind).map(|&i| &self.experts[i])
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ExpertDescriptor> {
        self.experts.iter().map(|e| &e.descriptor)
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    /// Mock experts following the published kind-to-model assignment. Each
    /// expert's seed is derived from `seed` and its position.
    pub fn default_mock(seed: u64) -> Self {
        let mut reg = Self::new();
        for (i, d) in default_descriptors(seed).into_iter().enumerate() {
            reg.register(d)
                .unwrap_or_else(|e| panic!("default descriptor {i} conflicts: {e}"));
        }
        reg
    }
}

/// The expert line-up: one descriptor per model, covering every kind once.
pub fn default_descriptors(seed: u64) -> Vec<ExpertDescriptor> {
    use TaskKind::*;
    let lineup: [(&str, &[TaskKind]); 9] = [
        ("stable-diffusion", &[ImageGen]),
        ("gligen-layout", &[LayoutGen]),
        ("instructpix2pix", &[ImageEditGlobal]),
        ("gligen-edit", &[ImageEditRegion]),
        ("seem", &[ImageSeg, VideoSeg]),
        ("fresco", &[VideoEdit]),
        ("modelscope-t2v", &[VideoGen]),
        ("i2vgen-xl", &[ImageToVideo]),
        ("auffusion", &[AudioGen]),
    ];
    lineup
        .iter()
        .enumerate()
        .map(|(i, (name, kinds))| ExpertDescriptor::mock(*name, kinds.iter().copied(), seed.wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::resolve_task;

    #[test]
    fn default_lineup_covers_every_kind_once() {
        let reg = ExpertRegistry::default_mock(0);
        for kind in TaskKind::ALL {
            assert!(reg.resolve(kind).is_some(), "{kind} unresolved");
        }
        assert_eq!(resolve_task(TaskKind::ImageGen, &reg).unwrap().name, "stable-diffusion");
        assert_eq!(resolve_task(TaskKind::ImageSeg, &reg).unwrap().name, "seem");
        assert_eq!(resolve_task(TaskKind::VideoSeg, &reg).unwrap().name, "seem");
    }

    #[test]
    fn registration_rules() {
        let mut reg = ExpertRegistry::new();
        reg.register(ExpertDescriptor::mock("seem", [TaskKind::ImageSeg, TaskKind::VideoSeg], 1))
            .unwrap();
        assert_eq!(resolve_task(TaskKind::VideoSeg, &reg).unwrap().name, "seem");
        assert_eq!(
            reg.register(ExpertDescriptor::mock("other", [TaskKind::ImageSeg], 2)),
            Err(RegistryError::DuplicateKind {
                kind: TaskKind::ImageSeg,
                existing: "seem".into()
            })
        );
        assert_eq!(
            reg.register(ExpertDescriptor::mock("empty", [], 2)),
            Err(RegistryError::EmptyKinds("empty".into()))
        );
        assert_eq!(
            resolve_task(TaskKind::AudioGen, &reg),
            Err(RegistryError::NoExpertRegistered(TaskKind::AudioGen))
        );
        // A failed registration leaves the mapping untouched.
        assert_eq!(reg.len(), 1);
        assert!(reg.resolve(TaskKind::ImageGen).is_none());
    }

    #[test]
    fn partial_conflict_registers_nothing() {
        let mut reg = ExpertRegistry::new();
        reg.register(ExpertDescriptor::mock("a", [TaskKind::VideoGen], 0)).unwrap();
        let err = reg.register(ExpertDescriptor::mock("b", [TaskKind::AudioGen, TaskKind::VideoGen], 0));
        assert!(err.is_err());
        assert!(reg.resolve(TaskKind::AudioGen).is_none());
    }
}
