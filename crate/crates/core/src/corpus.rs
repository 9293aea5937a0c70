//! Parallel pool and test set ingestion.
//!
//! Pools are immutable after load and safe to share across worker threads.
//! JSONL is the canonical interchange format because it carries metadata
//! (provenance flags, document ids) that raw tab-separated bitext cannot.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Sentence,
    Paragraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    WmtFull,
    WmtDev,
    HighEnd,
    Custom,
}

impl PoolKind {
    /// The high-end pool holds aligned paragraphs; everything else is
    /// sentence-level.
    pub fn granularity(self) -> Granularity {
        match self {
            PoolKind::HighEnd => Granularity::Paragraph,
            _ => Granularity::Sentence,
        }
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PoolKind::WmtFull => "wmt_full",
            PoolKind::WmtDev => "wmt_dev",
            PoolKind::HighEnd => "high_end",
            PoolKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolFormat {
    Jsonl,
    Tsv,
}

/// Language pair as English language names, e.g. ("English", "German").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        LangPair {
            source: source.into(),
            target: target.into(),
        }
    }
}

/// One aligned source/target unit with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub id: String,
    pub source_text: String,
    pub target_text: String,
    pub granularity: Granularity,
    pub target_original: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub kind: PoolKind,
    pub lang_pair: LangPair,
    pairs: Vec<SegmentPair>,
}

impl Pool {
    /// Build a pool from pre-validated pairs, enforcing invariants: non-empty
    /// texts, unique ids, one granularity.
    pub fn new(kind: PoolKind, lang_pair: LangPair, pairs: Vec<SegmentPair>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for pair in &pairs {
            if pair.source_text.trim().is_empty() || pair.target_text.trim().is_empty() {
                return Err(Error::EmptyInput(format!(
                    "segment {:?} has empty source or target text",
                    pair.id
                )));
            }
            if pair.granularity != kind.granularity() {
                return Err(Error::Config(format!(
                    "segment {:?} granularity does not match pool kind {kind}",
                    pair.id
                )));
            }
            if !seen.insert(pair.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: pair.id.clone(),
                });
            }
        }
        Ok(Pool {
            kind,
            lang_pair,
            pairs,
        })
    }

    pub fn pairs(&self) -> &[SegmentPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, idx: usize) -> &SegmentPair {
        &self.pairs[idx]
    }

    /// Content hash over ids and texts, used to bind persisted indexes to the
    /// exact pool they were built from.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for pair in &self.pairs {
            hasher.update(pair.id.as_bytes());
            hasher.update([0xff]);
            hasher.update(pair.source_text.as_bytes());
            hasher.update([0xff]);
            hasher.update(pair.target_text.as_bytes());
            hasher.update([0xff]);
        }
        hex::encode(hasher.finalize())
    }
}

/// An ordered, indexable test set; every segment carries a doc_id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub name: String,
    pub lang_pair: LangPair,
    segments: Vec<SegmentPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_label: Option<String>,
}

impl TestSet {
    pub fn new(
        name: impl Into<String>,
        lang_pair: LangPair,
        segments: Vec<SegmentPair>,
        reference_label: Option<String>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyInput("test set has no segments".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for seg in &segments {
            if seg.doc_id.is_none() {
                return Err(Error::Config(format!(
                    "test segment {:?} is missing doc_id",
                    seg.id
                )));
            }
            if !seen.insert(seg.id.as_str()) {
                return Err(Error::DuplicateId { id: seg.id.clone() });
            }
        }
        Ok(TestSet {
            name: name.into(),
            lang_pair,
            segments,
            reference_label,
        })
    }

    pub fn segments(&self) -> &[SegmentPair] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub size: usize,
    pub granularity: Granularity,
    pub mean_source_tokens: f64,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    source_text: String,
    target_text: String,
    #[serde(default)]
    target_original: Option<bool>,
    #[serde(default)]
    doc_id: Option<String>,
    #[serde(default)]
    genre: Option<String>,
}

fn file_stem_id(path: &Path, line: usize) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string());
    format!("{name}:{line}")
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::data(path, idx + 1, format!("read failed: {e}")))?;
        lines.push(line);
    }
    Ok(lines)
}

fn parse_records(path: &Path, format: PoolFormat, granularity: Granularity) -> Result<Vec<SegmentPair>> {
    let lines = read_lines(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let pair = match format {
            PoolFormat::Jsonl => {
                let raw: RawRecord = serde_json::from_str(line)
                    .map_err(|e| Error::data(path, line_no, format!("bad record: {e}")))?;
                SegmentPair {
                    id: raw.id.unwrap_or_else(|| file_stem_id(path, line_no)),
                    source_text: raw.source_text,
                    target_text: raw.target_text,
                    granularity,
                    target_original: raw.target_original.unwrap_or(false),
                    doc_id: raw.doc_id,
                    genre: raw.genre,
                }
            }
            PoolFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() < 2 {
                    return Err(Error::data(
                        path,
                        line_no,
                        format!("expected at least 2 tab-separated columns, got {}", cols.len()),
                    ));
                }
                let target_original = match cols.get(2) {
                    None => false,
                    Some(&"0") => false,
                    Some(&"1") => true,
                    Some(other) => {
                        return Err(Error::data(
                            path,
                            line_no,
                            format!("target_original column must be 0 or 1, got {other:?}"),
                        ))
                    }
                };
                SegmentPair {
                    id: file_stem_id(path, line_no),
                    source_text: cols[0].to_string(),
                    target_text: cols[1].to_string(),
                    granularity,
                    target_original,
                    doc_id: None,
                    genre: None,
                }
            }
        };
        if pair.source_text.trim().is_empty() || pair.target_text.trim().is_empty() {
            return Err(Error::data(path, line_no, "empty source or target text"));
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no records", path.display())));
    }
    Ok(pairs)
}

/// Load a prompt pool from JSONL or TSV. Ids default to `<filename>:<line>`
/// when the record carries none.
pub fn load_pool(
    path: impl AsRef<Path>,
    format: PoolFormat,
    kind: PoolKind,
    lang_pair: LangPair,
) -> Result<Pool> {
    let path = path.as_ref();
    let pairs = parse_records(path, format, kind.granularity())?;
    Pool::new(kind, lang_pair, pairs)
}

/// Load a test set from JSONL; every record must carry a doc_id.
pub fn load_test_set(
    path: impl AsRef<Path>,
    name: impl Into<String>,
    lang_pair: LangPair,
    reference_label: Option<String>,
) -> Result<TestSet> {
    let path = path.as_ref();
    let pairs = parse_records(path, PoolFormat::Jsonl, Granularity::Sentence)?;
    for pair in &pairs {
        if pair.doc_id.is_none() {
            return Err(Error::Config(format!(
                "test segment {:?} in {} is missing doc_id",
                pair.id,
                path.display()
            )));
        }
    }
    TestSet::new(name, lang_pair, pairs, reference_label)
}

/// Write a pool back to canonical JSONL. `load_pool` on the result yields an
/// equal pool.
pub fn save_pool_jsonl(pool: &Pool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for pair in pool.pairs() {
        let line = serde_json::to_string(&JsonlRecord::from(pair))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    id: &'a str,
    source_text: &'a str,
    target_text: &'a str,
    target_original: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    doc_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    genre: Option<&'a str>,
}

impl<'a> From<&'a SegmentPair> for JsonlRecord<'a> {
    fn from(p: &'a SegmentPair) -> Self {
        JsonlRecord {
            id: &p.id,
            source_text: &p.source_text,
            target_text: &p.target_text,
            target_original: p.target_original,
            doc_id: p.doc_id.as_deref(),
            genre: p.genre.as_deref(),
        }
    }
}

/// Keep only pairs flagged target-original, preserving order. Idempotent;
/// an empty result is permitted.
pub fn filter_target_original(pool: &Pool) -> Pool {
    Pool {
        kind: pool.kind,
        lang_pair: pool.lang_pair.clone(),
        pairs: pool
            .pairs
            .iter()
            .filter(|p| p.target_original)
            .cloned()
            .collect(),
    }
}

/// Exact size plus mean source length in tokens.
pub fn pool_stats(pool: &Pool) -> PoolStats {
    let size = pool.len();
    let total: usize = pool
        .pairs()
        .iter()
        .map(|p| text::count_tokens(&p.source_text))
        .sum();
    PoolStats {
        size,
        granularity: pool.kind.granularity(),
        mean_source_tokens: if size == 0 {
            0.0
        } else {
            total as f64 / size as f64
        },
    }
}

#[cfg(test)]
pub(crate) fn test_pair(id: &str, source: &str, target: &str) -> SegmentPair {
    SegmentPair {
        id: id.to_string(),
        source_text: source.to_string(),
        target_text: target.to_string(),
        granularity: Granularity::Sentence,
        target_original: false,
        doc_id: None,
        genre: None,
    }
}
