//! Content-addressed artifact references and a filesystem store.
//!
//! Artifacts live at `{root}/{media}/{sha256-hex}`. Reads recompute the
//! digest and refuse content that no longer matches its name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::MediaKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Lowercase hex SHA-256 of the artifact bytes.
    pub hash: String,
    pub media: MediaKind,
}

impl ArtifactRef {
    pub fn for_bytes(bytes: &[u8], media: MediaKind) -> Self {
        Self {
            hash: sha256_hex(bytes),
            media,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("artifact {0} not found")]
    NotFound(String),
    #[error("artifact {hash} is corrupt: content hashes to {actual}")]
    Corrupt { hash: String, actual: String },
    #[error("invalid artifact hash {0:?}")]
    InvalidHash(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, r: &ArtifactRef) -> Result<PathBuf, StoreError> {
        if r.hash.len() != 64 || !r.hash.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            return Err(StoreError::InvalidHash(r.hash.clone()));
        }
        Ok(self.root.join(r.media.as_str()).join(&r.hash))
    }

    /// Stores `bytes` under their digest. Idempotent.
    pub fn put(&self, bytes: &[u8], media: MediaKind) -> Result<ArtifactRef, StoreError> {
        let r = ArtifactRef::for_bytes(bytes, media);
        let path = self.path_for(&r)?;
        if path.exists() {
            return Ok(r);
        }
        let dir = path.parent().expect("artifact path has a parent");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.persist(&path).map_err(|e| StoreError::Io(e.error))?;
        Ok(r)
    }

    pub fn contains(&self, r: &ArtifactRef) -> bool {
        self.path_for(r).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn get(&self, r: &ArtifactRef) -> Result<Vec<u8>, StoreError> {
        let path = self.path_for(r)?;
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(r.hash.clone()),
            _ => StoreError::Io(e),
        })?;
        let actual = sha256_hex(&bytes);
        if actual != r.hash {
            return Err(StoreError::Corrupt {
                hash: r.hash.clone(),
                actual,
            });
        }
        Ok(bytes)
    }
}
