//! Reproducible run manifests: every pipeline stage appends an entry naming
//! its inputs and outputs with content digests, so any artifact can be traced
//! back to the configuration and files that produced it.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub unix_time: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub entries: Vec<ManifestEntry>,
}

pub fn digest_file(path: impl AsRef<Path>) -> Result<FileDigest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let read = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: hex::encode(hasher.finalize()),
    })
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(config_hash: impl Into<String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
            entries: Vec::new(),
        }
    }

    /// Load the manifest at `path`, or start a fresh one if absent.
    pub fn load_or_new(path: impl AsRef<Path>, config_hash: &str) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(RunManifest::new(config_hash));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_reader(BufReader::new(file))?;
        Ok(manifest)
    }

    pub fn append(
        &mut self,
        stage: impl Into<String>,
        inputs: Vec<FileDigest>,
        outputs: Vec<FileDigest>,
        note: Option<String>,
    ) {
        let unix_time = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.entries.push(ManifestEntry {
            stage: stage.into(),
            unix_time,
            inputs,
            outputs,
            note,
        });
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Paths of every output recorded by any stage.
    pub fn artifact_paths(&self) -> Vec<&str> {
        self.entries
            .iter()
            .flat_map(|e| e.outputs.iter().map(|o| o.path.as_str()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn digest_is_stable() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "content").unwrap();
        let a = digest_file(f.path()).unwrap();
        let b = digest_file(f.path()).unwrap();
        assert_eq!(a.sha256, b.sha256);
        assert_eq!(a.sha256.len(), 64);
    }

    #[test]
    fn manifest_round_trip_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut manifest = RunManifest::load_or_new(&path, "cfg123").unwrap();
        assert!(manifest.entries.is_empty());
        manifest.append("select", vec![], vec![], Some("seed 1".into()));
        manifest.save(&path).unwrap();

        let mut again = RunManifest::load_or_new(&path, "cfg123").unwrap();
        assert_eq!(again.entries.len(), 1);
        again.append("translate", vec![], vec![], None);
        again.save(&path).unwrap();

        let final_m = RunManifest::load_or_new(&path, "cfg123").unwrap();
        assert_eq!(final_m.entries.len(), 2);
        assert_eq!(final_m.entries[0].stage, "select");
        assert_eq!(final_m.entries[1].stage, "translate");
    }
}
