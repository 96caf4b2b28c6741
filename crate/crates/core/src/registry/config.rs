//! Registry configuration, as TOML or JSON.
//!
//! ```toml
//! seed = 0                      # seed for the default line-up
//!
//! [[experts]]
//! name = "seem"
//! kinds = ["ImageSeg", "VideoSeg"]   # kind names or tag names
//! backend = "mock"
//! seed = 3
//! mask_grid = 16                # optional
//!
//! [[experts]]
//! name = "sd-remote"
//! kinds = ["Gen"]
//! backend = "remote"
//! endpoint = "http://127.0.0.1:9000/run"
//! timeout_ms = 30000            # optional
//! max_retries = 2               # optional
//! backoff_ms = 100              # optional
//! ```
//!
//! With no `[[experts]]` the registry is the default mock line-up seeded
//! from the top-level `seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{default_descriptors, BackendSpec, ExpertDescriptor, ExpertRegistry, RegistryError, DEFAULT_MASK_GRID};
use crate::protocol::TaskKind;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendConfig {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub name: String,
    pub kinds: Vec<String>,
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub experts: Vec<ExpertConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("expert {name:?}: unknown task kind {kind:?}")]
    UnknownKind { name: String, kind: String },
    #[error("expert {name:?}: {reason}")]
    Invalid { name: String, reason: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl ExpertConfig {
    pub fn descriptor(&self) -> Result<ExpertDescriptor, ConfigError> {
        let mut supported_kinds = std::collections::BTreeSet::new();
        for k in &self.kinds {
            let kind: TaskKind = k.parse().map_err(|_| ConfigError::UnknownKind {
                name: self.name.clone(),
                kind: k.clone(),
            })?;
            supported_kinds.insert(kind);
        }
        let backend = match self.backend {
            BackendConfig::Mock => BackendSpec::Mock {
                seed: self.seed.unwrap_or(0),
                mask_grid: self.mask_grid.unwrap_or(DEFAULT_MASK_GRID),
            },
            BackendConfig::Remote => BackendSpec::Remote {
                endpoint: self.endpoint.clone().ok_or_else(|| ConfigError::Invalid {
                    name: self.name.clone(),
                    reason: "remote backend needs an endpoint".into(),
                })?,
                timeout_ms: self.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS),
                max_retries: self.max_retries.unwrap_or(DEFAULT_MAX_RETRIES),
                backoff_ms: self.backoff_ms.unwrap_or(DEFAULT_BACKOFF_MS),
            },
        };
        Ok(ExpertDescriptor {
            name: self.name.clone(),
            supported_kinds,
            backend,
        })
    }
}

impl RegistryConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn descriptors(&self) -> Result<Vec<ExpertDescriptor>, ConfigError> {
        if self.experts.is_empty() {
            return Ok(default_descriptors(self.seed));
        }
        self.experts.iter().map(ExpertConfig::descriptor).collect()
    }

    pub fn build(&self) -> Result<ExpertRegistry, ConfigError> {
        let mut reg = ExpertRegistry::new();
        for d in self.descriptors()? {
            reg.register(d)?;
        }
        Ok(reg)
    }
}
