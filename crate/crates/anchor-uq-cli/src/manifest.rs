//! Run manifests: enough recorded state to reproduce a run byte-for-byte.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved settings; rerunning with these reproduces the run.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub created_unix_secs: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>, outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json_pretty(path, self)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resume guard: the reproducibility-relevant fields must match; the
    /// timestamp may differ.
    pub fn check_compatible(&self, other: &RunManifest) -> Result<()> {
        if self.command != other.command || self.config != other.config || self.seeds != other.seeds
        {
            bail!(
                "existing manifest does not match the requested configuration; \
                 refusing to resume (delete the output directory to start over)"
            );
        }
        Ok(())
    }
}
