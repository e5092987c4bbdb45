use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one command's outputs. Contains nothing that varies between
/// runs with the same config and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files written under one output root.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, creating parent directories.
    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    pub fn record(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.record(p.clone());
        Ok(p)
    }

    pub fn extend(&mut self, other: Outputs) {
        self.files.extend(other.files);
    }

    pub fn manifest(&self, command: &str, config_sha256: &str, seed: u64) -> Result<Manifest> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
            let rel = f.strip_prefix(&self.root).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            outputs.push(ManifestEntry {
                path,
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        outputs.dedup_by(|a, b| a.path == b.path);
        Ok(Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
            outputs,
        })
    }

    /// Writes `manifest_<command>.json` next to the outputs.
    pub fn write_manifest(&self, command: &str, config_sha256: &str, seed: u64) -> Result<PathBuf> {
        let m = self.manifest(command, config_sha256, seed)?;
        let mut json = serde_json::to_vec_pretty(&m)?;
        json.push(b'\n');
        let p = self.path(&format!("manifest_{command}.json"))?;
        std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
