//! Run manifests and atomic file writes.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST_VERSION: u32 = 1;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    /// Records the start of a run in `out_dir/manifest.json`.
    pub fn start(out_dir: &Path, command: &str, config_bytes: &[u8], seeds: Vec<u64>) -> Result<Self> {
        let m = RunManifest {
            version: RUN_MANIFEST_VERSION,
            command: command.to_string(),
            config_hash: sha256_hex(config_bytes),
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now_secs(),
            finished_at: None,
            status: "running".to_string(),
            outputs: Vec::new(),
        };
        m.write(out_dir)?;
        Ok(m)
    }

    pub fn finish(mut self, out_dir: &Path, status: &str, outputs: Vec<PathBuf>) -> Result<()> {
        self.finished_at = Some(now_secs());
        self.status = status.to_string();
        self.outputs = outputs;
        self.write(out_dir)
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        write_atomic(
            &out_dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?.as_bytes(),
        )
    }
}

/// Elapsed seconds since construction.
pub struct WallClock(std::time::Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(std::time::Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl relwalk_core::trainer::Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
