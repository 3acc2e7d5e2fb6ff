//! Run manifests: what a command read, wrote and how to run it again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "run.json";

/// SHA-256 of `"blob <len>\0" + content`, the git object layout with a
/// stronger hash.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// Named command arguments (input paths and flags), excluding `--out`.
    pub args: BTreeMap<String, String>,
    /// Full configuration in `key = value` form.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    /// Artifacts, relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: BTreeMap::new(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let hash = file_hash(path)?;
        self.inputs.push(FileRecord {
            path: path.to_path_buf(),
            hash,
        });
        Ok(())
    }

    /// Records `out_dir/name`, which must already exist.
    pub fn add_output(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let hash = file_hash(&out_dir.join(name))?;
        self.outputs.push(FileRecord {
            path: PathBuf::from(name),
            hash,
        });
        Ok(())
    }

    /// Times `f` under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    /// Inputs whose current content differs from the recorded hash.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for r in &self.inputs {
            if file_hash(&r.path)? != r.hash {
                changed.push(r.path.clone());
            }
        }
        Ok(changed)
    }

    /// Outputs in `out_dir` that are missing or differ from the record.
    pub fn mismatched_outputs(&self, out_dir: &Path) -> Vec<PathBuf> {
        self.outputs
            .iter()
            .filter(|r| file_hash(&out_dir.join(&r.path)).ok().as_deref() != Some(r.hash.as_str()))
            .map(|r| r.path.clone())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Other(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad run manifest: {e}")))
    }
}
