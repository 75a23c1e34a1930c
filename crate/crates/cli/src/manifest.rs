//! Per-run record of the resolved configuration and code identity.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("MUGAN_GIT_REV"));

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub code_version: String,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    /// Fully resolved settings, defaults included.
    pub config: serde_json::Value,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(skip)]
    path: PathBuf,
}

impl RunManifest {
    /// Create and immediately write the manifest to `path`.
    pub fn start(
        command: &str,
        seed: Option<u64>,
        variant: Option<String>,
        config: impl Serialize,
        path: &Path,
    ) -> Result<Self> {
        let m = Self {
            command: command.into(),
            args: std::env::args().collect(),
            code_version: CODE_VERSION.into(),
            seed,
            variant,
            config: serde_json::to_value(config)?,
            started_at: Utc::now(),
            finished_at: None,
            path: path.to_path_buf(),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&self.path, text + "\n").with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.finished_at = Some(Utc::now());
        self.write()
    }
}
