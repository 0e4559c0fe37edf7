//! Run manifest: config echo, seeds, input/output checksums, and
//! timings. Written with status "running" before the work starts and
//! finalized to "complete" afterwards, so an interrupted run is
//! distinguishable from a finished one.

use crate::config::RunConfig;
use fewshot_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub bytes: u64,
    pub crc32: u32,
}

impl FileStamp {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(Self {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            crc32: crc32fast::hash(&data),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub status: String,
    pub master_seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub started_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

pub struct ManifestWriter {
    manifest: RunManifest,
    path: PathBuf,
    started: Instant,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ManifestWriter {
    /// Writes the initial "running" manifest into `out_dir`.
    pub fn begin(
        out_dir: &Path,
        command: &str,
        config: &RunConfig,
        inputs: &[PathBuf],
    ) -> Result<Self> {
        let stamps: Vec<FileStamp> = inputs
            .iter()
            .map(|p| FileStamp::of(p))
            .collect::<Result<_>>()?;
        let manifest = RunManifest {
            tool: format!("fewshot {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            status: "running".into(),
            master_seed: config.master_seed,
            config: config.clone(),
            inputs: stamps,
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: None,
            wall_seconds: None,
        };
        let writer = Self {
            manifest,
            path: out_dir.join(format!("manifest_{command}.json")),
            started: Instant::now(),
        };
        writer.write()?;
        Ok(writer)
    }

    /// Stamps the outputs and finalizes the manifest.
    pub fn finish(mut self, outputs: &[PathBuf]) -> Result<()> {
        self.manifest.outputs = outputs
            .iter()
            .map(|p| FileStamp::of(p))
            .collect::<Result<_>>()?;
        self.manifest.status = "complete".into();
        self.manifest.finished_unix = Some(unix_now());
        self.manifest.wall_seconds = Some(self.started.elapsed().as_secs_f64());
        self.write()
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(&self.path, text)
            .map_err(|e| Error::io(self.path.display().to_string(), e))
    }
}
