//! Persistent session state.
//!
//! Each saved context is a content-addressed snapshot at
//! `{root}/snapshots/{sha256}.json`. A small ref file at
//! `{root}/sessions/{sha256(session_id)}.json` names the latest snapshot.
//! Loading re-hashes the snapshot and refuses anything that does not match.
//!
//! Cached `/v1/execute` responses live under `{root}/responses/`, keyed by
//! session and idempotency key.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokroute_core::artifact::sha256_hex;
use tokroute_core::session::SessionContext;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corrupt state at {path}: {reason}")]
    CorruptState { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRef {
    session_id: String,
    snapshot: String,
}

/// A response stored for replay under an idempotency key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    /// Hash of the request body the key was first used with.
    pub request_hash: String,
    pub status: u16,
    pub body: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn read_optional(path: &Path) -> std::io::Result<Option<Vec<u8>>> {
    match std::fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("snapshots"))?;
        std::fs::create_dir_all(root.join("sessions"))?;
        std::fs::create_dir_all(root.join("responses"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn ref_path(&self, session_id: &str) -> PathBuf {
        self.root
            .join("sessions")
            .join(format!("{}.json", sha256_hex(session_id.as_bytes())))
    }

    fn snapshot_path(&self, hash: &str) -> PathBuf {
        self.root.join("snapshots").join(format!("{hash}.json"))
    }

    /// Writes a snapshot and points the session at it. Returns the
    /// snapshot hash.
    pub fn save(&self, ctx: &SessionContext) -> Result<String, StoreError> {
        let bytes = serde_json::to_vec(ctx).expect("contexts serialize");
        let hash = sha256_hex(&bytes);
        let snap = self.snapshot_path(&hash);
        if !snap.exists() {
            write_atomic(&snap, &bytes)?;
        }
        let r = SessionRef {
            session_id: ctx.session_id.clone(),
            snapshot: hash.clone(),
        };
        write_atomic(
            &self.ref_path(&ctx.session_id),
            &serde_json::to_vec(&r).expect("refs serialize"),
        )?;
        Ok(hash)
    }

    /// The latest saved context, or `None` if the session was never saved.
    pub fn load(&self, session_id: &str) -> Result<Option<SessionContext>, StoreError> {
        let ref_path = self.ref_path(session_id);
        let Some(raw) = read_optional(&ref_path)? else {
            return Ok(None);
        };
        let corrupt = |path: &Path, reason: String| StoreError::CorruptState {
            path: path.to_path_buf(),
            reason,
        };
        let r: SessionRef = serde_json::from_slice(&raw).map_err(|e| corrupt(&ref_path, e.to_string()))?;
        if r.session_id != session_id {
            return Err(corrupt(&ref_path, format!("ref names session {:?}", r.session_id)));
        }
        let snap = self.snapshot_path(&r.snapshot);
        let bytes = read_optional(&snap)?.ok_or_else(|| corrupt(&snap, "snapshot missing".into()))?;
        let actual = sha256_hex(&bytes);
        if actual != r.snapshot {
            return Err(corrupt(&snap, format!("checksum mismatch: content hashes to {actual}")));
        }
        let ctx: SessionContext = serde_json::from_slice(&bytes).map_err(|e| corrupt(&snap, e.to_string()))?;
        if ctx.session_id != session_id {
            return Err(corrupt(&snap, format!("snapshot holds session {:?}", ctx.session_id)));
        }
        Ok(Some(ctx))
    }

    fn response_path(&self, session_id: &str, key: &str) -> PathBuf {
        let id = sha256_hex(serde_json::json!([session_id, key]).to_string().as_bytes());
        self.root.join("responses").join(format!("{id}.json"))
    }

    pub fn cached_response(&self, session_id: &str, key: &str) -> Result<Option<CachedResponse>, StoreError> {
        let path = self.response_path(session_id, key);
        let Some(raw) = read_optional(&path)? else {
            return Ok(None);
        };
        serde_json::from_slice(&raw).map(Some).map_err(|e| StoreError::CorruptState {
            path,
            reason: e.to_string(),
        })
    }

    pub fn cache_response(&self, session_id: &str, key: &str, resp: &CachedResponse) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(resp).expect("responses serialize");
        write_atomic(&self.response_path(session_id, key), &bytes)?;
        Ok(())
    }
}
