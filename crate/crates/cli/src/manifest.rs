//! Run manifests and atomic output files.
//!
//! Every command writes its outputs through [`write_atomic`] (temp file +
//! rename, same directory) and finishes by writing a manifest that lists
//! each output with its content hash, the fully-resolved configuration, and
//! per-phase wall-clock times.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkippedDataset {
    pub dataset: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub wallclock_ms: BTreeMap<String, u128>,
    pub outputs: Vec<OutputFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedDataset>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            wallclock_ms: BTreeMap::new(),
            outputs: Vec::new(),
            skipped: Vec::new(),
        }
    }

    pub fn phase(&mut self, name: &str, ms: u128) {
        self.wallclock_ms.insert(name.to_string(), ms);
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.outputs.push(OutputFile {
            path: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| crate::error::CliError::other(e.to_string()))?;
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

/// Write to a temp file in the target directory, then rename into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = dir.join(path.file_name().expect("file name"));
    tmp.set_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("records.csv");
        write_atomic(&out, b"dataset,fold\n").unwrap();
        assert!(out.exists());
        assert!(!dir.path().join("records.tmp").exists());

        let mut m = RunManifest::new("evaluate", &ExperimentConfig::default());
        m.phase("total", 12);
        m.record_output(&out).unwrap();
        let path = m.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("records.csv"));
        assert!(text.contains("sha256"));
        // defaults are materialized
        assert!(text.contains("\"k_max\": 256"));
    }
}
