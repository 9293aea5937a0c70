//! Experiment configuration: a single JSON file provides defaults, and
//! command-line flags override individual fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use promptmt::backend::HttpBackendConfig;
use promptmt::corpus::{LangPair, PoolFormat, PoolKind};
use promptmt::error::{Error, Result};
use promptmt::manifest::digest_bytes;
use promptmt::selection::{AnnParams, IndexMode, Strategy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolEntry {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: PoolFormat,
}

fn default_format() -> PoolFormat {
    PoolFormat::Jsonl
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSetEntry {
    pub path: PathBuf,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub source_label: String,
    pub target_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub mock_table: Option<PathBuf>,
    #[serde(default)]
    pub http: Option<HttpBackendConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSettings {
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub n_shots: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub index_mode: Option<IndexMode>,
    #[serde(default)]
    pub approx_params: Option<AnnParams>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub lang_pair: Option<LangPair>,
    #[serde(default)]
    pub pools: BTreeMap<String, PoolEntry>,
    #[serde(default)]
    pub test_set: Option<TestSetEntry>,
    #[serde(default)]
    pub template: Option<TemplateConfig>,
    #[serde(default)]
    pub selection: Option<SelectionSettings>,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Metric name -> per-segment score file.
    #[serde(default)]
    pub metrics: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)?;
        if config.seeds.is_empty() {
            return Err(Error::Config("seeds list must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !config.seeds.iter().all(|s| seen.insert(s)) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        Ok((config, digest_bytes(&bytes)))
    }

    pub fn pool_entry(&self, kind: PoolKind) -> Option<&PoolEntry> {
        self.pools.get(&kind.to_string())
    }
}
