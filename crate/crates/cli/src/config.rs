//! Effective configuration: flags override environment variables, which
//! override the config file, which overrides built-in defaults.
//!
//! The config file is TOML (or JSON when it ends in `.json`) holding the
//! registry settings plus:
//!
//! ```toml
//! state_dir = ".tokroute"
//! listen = "127.0.0.1:8080"
//! log = "info"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokroute_core::registry::{ConfigError as RegistryConfigError, ExpertRegistry, RegistryConfig};

pub const ENV_STATE_DIR: &str = "TOKROUTE_STATE_DIR";
pub const ENV_LISTEN: &str = "TOKROUTE_LISTEN";
pub const ENV_LOG: &str = "TOKROUTE_LOG";

pub const DEFAULT_STATE_DIR: &str = ".tokroute";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_LOG: &str = "info";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub state_dir: Option<PathBuf>,
    #[serde(default)]
    pub listen: Option<String>,
    #[serde(default)]
    pub log: Option<String>,
    #[serde(flatten)]
    pub registry: RegistryConfig,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub state_dir: Option<PathBuf>,
    pub listen: Option<String>,
    pub log: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub config_file: Option<PathBuf>,
    pub state_dir: PathBuf,
    pub listen: String,
    pub log: String,
    pub registry: RegistryConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryConfigError),
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}

impl EffectiveConfig {
    /// Resolves every setting. `env` looks up an environment variable.
    pub fn resolve(
        config_file: Option<&Path>,
        flags: &Overrides,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let file = match config_file {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let state_dir = flags
            .state_dir
            .clone()
            .or_else(|| env(ENV_STATE_DIR).map(PathBuf::from))
            .or(file.state_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR));
        let listen = flags
            .listen
            .clone()
            .or_else(|| env(ENV_LISTEN))
            .or(file.listen)
            .unwrap_or_else(|| DEFAULT_LISTEN.to_string());
        let log = flags
            .log
            .clone()
            .or_else(|| env(ENV_LOG))
            .or(file.log)
            .unwrap_or_else(|| DEFAULT_LOG.to_string());
        let cfg = Self {
            config_file: config_file.map(Path::to_path_buf),
            state_dir,
            listen,
            log,
            registry: file.registry,
        };
        // Surface registry mistakes now rather than on first use.
        cfg.registry.descriptors()?;
        Ok(cfg)
    }

    pub fn from_process_env(config_file: Option<&Path>, flags: &Overrides) -> Result<Self, ConfigError> {
        Self::resolve(config_file, flags, &|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    pub fn build_registry(&self) -> Result<ExpertRegistry, ConfigError> {
        Ok(self.registry.build()?)
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.state_dir.join("artifacts")
    }
}
