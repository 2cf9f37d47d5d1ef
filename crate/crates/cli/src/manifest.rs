//! Run manifest: which artifacts each stage read and wrote, by digest.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use ordscore_core::{Result, ScoreError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| ScoreError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// Input path (as given) to digest.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to digest.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    /// Reads the manifest in `dir`, or starts an empty one.
    pub fn load_or_new(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| ScoreError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| ScoreError::io(&path, e))
    }

    /// Digest of every output across stages, keyed by artifact name.
    pub fn output_digests(&self) -> BTreeMap<String, String> {
        self.stages.values().flat_map(|s| s.outputs.clone()).collect()
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects one stage's inputs and written artifacts, then merges them
/// into the manifest of the output directory.
pub struct StageWriter<'a> {
    dir: &'a Path,
    name: &'static str,
    record: StageRecord,
}

impl<'a> StageWriter<'a> {
    pub fn new(dir: &'a Path, name: &'static str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| ScoreError::io(dir, e))?;
        Ok(StageWriter {
            dir,
            name,
            record: StageRecord {
                started_unix: unix_now(),
                ..Default::default()
            },
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.record.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Writes an artifact into the output directory and records its digest.
    pub fn output(&mut self, file_name: &str, bytes: &[u8]) -> Result<String> {
        let path = self.dir.join(file_name);
        std::fs::write(&path, bytes).map_err(|e| ScoreError::io(&path, e))?;
        let digest = sha256_hex(bytes);
        self.record.outputs.insert(file_name.to_string(), digest.clone());
        Ok(digest)
    }

    pub fn finish(mut self, config_raw: &[u8]) -> Result<StageRecord> {
        self.record.finished_unix = unix_now();
        let mut manifest = RunManifest::load_or_new(self.dir)?;
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config_sha256 = sha256_hex(config_raw);
        manifest.stages.insert(self.name.to_string(), self.record.clone());
        manifest.save(self.dir)?;
        Ok(self.record)
    }
}
