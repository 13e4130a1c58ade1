//! Stage manifests: what ran, with which config, on which inputs, producing
//! which bytes.

use std::path::{Path, PathBuf};

use pdrlab::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Command;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    /// Absolute paths of files read.
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| Ok(FileHash { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect()
}

pub fn hash_outputs(out: &Path, rel: &[PathBuf]) -> Result<Vec<FileHash>> {
    rel.iter()
        .map(|r| Ok(FileHash { path: r.display().to_string(), sha256: sha256_file(&out.join(r))? }))
        .collect()
}

impl Manifest {
    pub fn file_name(&self) -> String {
        format!("manifest-{}.json", self.command.stage_name())
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(self.file_name());
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::config("manifest", format!("{}: {e}", path.display())))
    }

    /// Manifests in `dir`, sorted by file name.
    pub fn find(dir: &Path) -> Result<Vec<PathBuf>> {
        let rd = std::fs::read_dir(dir).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(dir.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut out = Vec::new();
        for entry in rd {
            let p = entry?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.starts_with("manifest-") && name.ends_with(".json") {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }
}
