//! Per-command run manifest: resolved configuration, seeds, file digests and timings.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::Config;

/// Convention used for every reported field-energy series and fitted rate.
pub const RATE_CONVENTION: &str = "half-l2-norm: rates are fitted on ln(0.5*||E||_2)";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the output directory when inside it.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Config,
    /// Digest of the resolved configuration rendered as TOML.
    pub config_sha256: String,
    pub deterministic: bool,
    pub threads: usize,
    pub rate_convention: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings: Vec<Timing>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, deterministic: bool, threads: usize) -> anyhow::Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            config_sha256: hamrom::io::sha256_hex(config.to_toml()?.as_bytes()),
            deterministic,
            threads,
            rate_convention: RATE_CONVENTION.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            summary: serde_json::Value::Null,
        })
    }

    fn record(out_dir: &Path, path: &Path) -> anyhow::Result<FileRecord> {
        let bytes = std::fs::metadata(path).with_context(|| format!("stat {}", path.display()))?.len();
        let sha256 = hamrom::io::file_digest(path)?;
        let rel = path.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf());
        Ok(FileRecord { path: rel, bytes, sha256 })
    }

    pub fn input(&mut self, out_dir: &Path, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(Self::record(out_dir, path)?);
        Ok(())
    }

    pub fn output(&mut self, out_dir: &Path, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(Self::record(out_dir, path)?);
        Ok(())
    }

    /// Runs `f`, recording its wall time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> anyhow::Result<T>) -> anyhow::Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(Timing { phase: phase.to_string(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }

    pub fn path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("manifest_{command}.json"))
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = Self::path(out_dir, &self.command);
        hamrom::io::write_json(&path, self)?;
        Ok(path)
    }
}
