//! Target-side train/test contamination detection via high-order n-gram
//! overlap, clean / not-clean test-set partitioning, and paired-system delta
//! reports over the resulting subsets.
//!
//! The index stores 128-bit hashes of every token n-gram of the training
//! corpus, so false negatives are impossible and the false-positive
//! probability from hash collisions is below 2^-64 per pair. Test segments
//! shorter than n tokens count as overlapping when their complete token
//! sequence occurs contiguously inside a training example; that check is
//! answered from a window index when the corpus is small enough, and by a
//! streaming rescan of the corpus file otherwise.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::TestSet;
use crate::error::{Error, Result};
use crate::evaluation::ScoredRun;
use crate::hash::hash_token_seq;
use crate::text;

pub const DEFAULT_NGRAM_ORDER: usize = 15;

/// Token bound under which all short windows (k-grams for k < n) are kept in
/// memory; larger corpora fall back to rescanning the corpus file for
/// segments shorter than n tokens.
pub const DEFAULT_SHORT_WINDOW_TOKEN_BOUND: usize = 250_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapConfig {
    pub n: usize,
    #[serde(default = "default_short_bound")]
    pub short_window_token_bound: usize,
}

fn default_short_bound() -> usize {
    DEFAULT_SHORT_WINDOW_TOKEN_BOUND
}

impl Default for OverlapConfig {
    fn default() -> Self {
        OverlapConfig {
            n: DEFAULT_NGRAM_ORDER,
            short_window_token_bound: DEFAULT_SHORT_WINDOW_TOKEN_BOUND,
        }
    }
}

impl OverlapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tokenizers
// ---------------------------------------------------------------------------

/// Pluggable tokenizer; the id is recorded in the index and checked at query
/// time so an index is never consulted with mismatched tokenization.
pub trait OverlapTokenizer: Send + Sync {
    fn id(&self) -> &str;
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;
}

/// Deterministic subword-free default: lowercase, Unicode word boundaries,
/// CJK per character.
#[derive(Debug, Default, Clone)]
pub struct DefaultTokenizer;

impl OverlapTokenizer for DefaultTokenizer {
    fn id(&self) -> &str {
        "default-v1"
    }

    fn tokenize(&self, text_in: &str) -> Result<Vec<String>> {
        Ok(text::tokenize(text_in, true))
    }
}

/// Greedy longest-match WordPiece over an external vocabulary file, for
/// plugging in BERT-style subword tokenization without shipping the model.
pub struct WordpieceTokenizer {
    vocab: HashSet<String>,
    max_piece_chars: usize,
    id: String,
}

impl WordpieceTokenizer {
    pub fn from_vocab_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = HashSet::new();
        let mut hasher = <sha2::Sha256 as sha2::Digest>::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let token = line.trim();
            if !token.is_empty() {
                sha2::Digest::update(&mut hasher, token.as_bytes());
                sha2::Digest::update(&mut hasher, [0xff]);
                vocab.insert(token.to_string());
            }
        }
        if vocab.is_empty() {
            return Err(Error::EmptyInput(format!(
                "vocabulary file {} is empty",
                path.display()
            )));
        }
        let digest = hex::encode(sha2::Digest::finalize(hasher));
        let max_piece_chars = vocab
            .iter()
            .map(|t| t.trim_start_matches("##").chars().count())
            .max()
            .unwrap_or(1);
        Ok(WordpieceTokenizer {
            vocab,
            max_piece_chars,
            id: format!("wordpiece:{}", &digest[..16]),
        })
    }

    fn split_word(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0usize;
        let mut pieces = Vec::new();
        while start < chars.len() {
            let mut end = chars.len().min(start + self.max_piece_chars);
            let mut matched = None;
            while end > start {
                let piece: String = chars[start..end].iter().collect();
                let candidate = if start == 0 {
                    piece
                } else {
                    format!("##{piece}")
                };
                if self.vocab.contains(&candidate) {
                    matched = Some((candidate, end));
                    break;
                }
                end -= 1;
            }
            match matched {
                Some((piece, next)) => {
                    pieces.push(piece);
                    start = next;
                }
                None => {
                    out.push("[UNK]".to_string());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl OverlapTokenizer for WordpieceTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn tokenize(&self, text_in: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for word in text::tokenize(text_in, false) {
            self.split_word(&word, &mut out);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One document per line.
    Text,
    /// One JSON object per line with a "text" field.
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
enum ShortMode {
    /// Hashes of every k-gram, 1 <= k < n, over all training documents.
    Windows(HashSet<u128>),
    /// Stream the corpus file again for each short query.
    Rescan { path: PathBuf, format: CorpusFormat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapIndex {
    n: usize,
    tokenizer_id: String,
    ngram_hashes: HashSet<u128>,
    short: ShortMode,
    pub corpus_fingerprint: String,
    pub doc_count: usize,
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Clean,
    Overlapping,
}

fn doc_from_line(line: &str, format: CorpusFormat, path: &Path, line_no: usize) -> Result<Option<String>> {
    match format {
        CorpusFormat::Text => {
            if line.trim().is_empty() {
                Ok(None)
            } else {
                Ok(Some(line.to_string()))
            }
        }
        CorpusFormat::Jsonl => {
            if line.trim().is_empty() {
                return Ok(None);
            }
            #[derive(Deserialize)]
            struct Doc {
                text: String,
            }
            let doc: Doc = serde_json::from_str(line)
                .map_err(|e| Error::data(path, line_no, format!("bad document: {e}")))?;
            Ok(Some(doc.text))
        }
    }
}

struct IndexBuilder<'a> {
    cfg: &'a OverlapConfig,
    tokenizer: &'a dyn OverlapTokenizer,
    ngram_hashes: HashSet<u128>,
    windows: Option<HashSet<u128>>,
    hasher: sha2::Sha256,
    doc_count: usize,
    token_count: usize,
}

impl<'a> IndexBuilder<'a> {
    fn new(cfg: &'a OverlapConfig, tokenizer: &'a dyn OverlapTokenizer) -> Self {
        IndexBuilder {
            cfg,
            tokenizer,
            ngram_hashes: HashSet::new(),
            windows: Some(HashSet::new()),
            hasher: <sha2::Sha256 as sha2::Digest>::new(),
            doc_count: 0,
            token_count: 0,
        }
    }

    fn add_doc(&mut self, doc: &str, doc_ref: &str) -> Result<()> {
        let tokens = self.tokenizer.tokenize(doc).map_err(|e| {
            Error::Config(format!("tokenizer failed on document {doc_ref}: {e}"))
        })?;
        sha2::Digest::update(&mut self.hasher, doc.as_bytes());
        sha2::Digest::update(&mut self.hasher, [0xff]);
        self.doc_count += 1;
        self.token_count += tokens.len();
        let n = self.cfg.n;
        if tokens.len() >= n {
            for window in tokens.windows(n) {
                self.ngram_hashes.insert(hash_token_seq(window));
            }
        }
        if let Some(windows) = &mut self.windows {
            for k in 1..n {
                if tokens.len() < k {
                    break;
                }
                for window in tokens.windows(k) {
                    windows.insert(hash_token_seq(window));
                }
            }
            if self.token_count > self.cfg.short_window_token_bound {
                self.windows = None;
            }
        }
        Ok(())
    }

    fn finish(self, rescan: Option<(PathBuf, CorpusFormat)>) -> Result<OverlapIndex> {
        let short = match self.windows {
            Some(w) => ShortMode::Windows(w),
            None => match rescan {
                Some((path, format)) => ShortMode::Rescan { path, format },
                None => {
                    return Err(Error::Config(format!(
                        "corpus exceeds the {}-token window bound and no file is available to rescan",
                        self.cfg.short_window_token_bound
                    )))
                }
            },
        };
        Ok(OverlapIndex {
            n: self.cfg.n,
            tokenizer_id: self.tokenizer.id().to_string(),
            ngram_hashes: self.ngram_hashes,
            short,
            corpus_fingerprint: hex::encode(sha2::Digest::finalize(self.hasher)),
            doc_count: self.doc_count,
            token_count: self.token_count,
        })
    }
}

/// Build an index from in-memory documents. Short-sequence windows must fit
/// under the token bound here; corpora beyond the bound have to come through
/// `build_index_from_path` so short checks can rescan the file.
pub fn build_index_from_docs<I, S>(
    docs: I,
    cfg: &OverlapConfig,
    tokenizer: &dyn OverlapTokenizer,
) -> Result<OverlapIndex>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    cfg.validate()?;
    let mut builder = IndexBuilder::new(cfg, tokenizer);
    for (i, doc) in docs.into_iter().enumerate() {
        builder.add_doc(doc.as_ref(), &format!("doc {i}"))?;
    }
    builder.finish(None)
}

/// Stream a corpus file into an index. If the corpus exceeds the short-window
/// token bound, short-sequence checks fall back to rescanning this file.
pub fn build_index_from_path(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    cfg: &OverlapConfig,
    tokenizer: &dyn OverlapTokenizer,
) -> Result<OverlapIndex> {
    cfg.validate()?;
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = IndexBuilder::new(cfg, tokenizer);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::data(path, line_no, format!("read failed: {e}")))?;
        if let Some(doc) = doc_from_line(&line, format, path, line_no)? {
            builder.add_doc(&doc, &format!("{}:{line_no}", path.display()))?;
        }
    }
    builder.finish(Some((path.to_path_buf(), format)))
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

impl OverlapIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tokenizer_id(&self) -> &str {
        &self.tokenizer_id
    }

    pub fn ngram_count(&self) -> usize {
        self.ngram_hashes.len()
    }

    fn check_tokenizer(&self, tokenizer: &dyn OverlapTokenizer) -> Result<()> {
        if tokenizer.id() != self.tokenizer_id {
            return Err(Error::TokenizerMismatch {
                index: self.tokenizer_id.clone(),
                query: tokenizer.id().to_string(),
            });
        }
        Ok(())
    }

    /// Classify one segment. Segments of at least n tokens overlap iff any
    /// of their n-grams is in the index; shorter segments overlap iff their
    /// complete token sequence occurs contiguously in a training example.
    pub fn classify_segment(
        &self,
        text_in: &str,
        tokenizer: &dyn OverlapTokenizer,
    ) -> Result<Classification> {
        self.check_tokenizer(tokenizer)?;
        let tokens = tokenizer.tokenize(text_in)?;
        if tokens.is_empty() {
            return Ok(Classification::Clean);
        }
        if tokens.len() >= self.n {
            let hit = tokens
                .windows(self.n)
                .any(|w| self.ngram_hashes.contains(&hash_token_seq(w)));
            return Ok(if hit {
                Classification::Overlapping
            } else {
                Classification::Clean
            });
        }
        let hit = match &self.short {
            ShortMode::Windows(windows) => windows.contains(&hash_token_seq(&tokens)),
            ShortMode::Rescan { path, format } => {
                self.rescan_contains(path, *format, tokenizer, &tokens)?
            }
        };
        Ok(if hit {
            Classification::Overlapping
        } else {
            Classification::Clean
        })
    }

    fn rescan_contains(
        &self,
        path: &Path,
        format: CorpusFormat,
        tokenizer: &dyn OverlapTokenizer,
        needle: &[String],
    ) -> Result<bool> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line =
                line.map_err(|e| Error::data(path, line_no, format!("read failed: {e}")))?;
            if let Some(doc) = doc_from_line(&line, format, path, line_no)? {
                let tokens = tokenizer.tokenize(&doc)?;
                if contains_contiguous(&tokens, needle) {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// Persist as JSON; hashes are stored as (hi, lo) u64 pairs in sorted
    /// order so the file is deterministic.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rescan = match &self.short {
            ShortMode::Windows(_) => None,
            ShortMode::Rescan { path, format } => {
                Some((path.to_string_lossy().into_owned(), *format))
            }
        };
        let windows = match &self.short {
            ShortMode::Windows(w) => Some(sorted_pairs(w)),
            ShortMode::Rescan { .. } => None,
        };
        let wire = IndexWire {
            n: self.n,
            tokenizer_id: self.tokenizer_id.clone(),
            corpus_fingerprint: self.corpus_fingerprint.clone(),
            doc_count: self.doc_count,
            token_count: self.token_count,
            ngram_hashes: sorted_pairs(&self.ngram_hashes),
            windows,
            rescan,
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &wire)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let wire: IndexWire = serde_json::from_reader(BufReader::new(file))?;
        let short = match (wire.windows, wire.rescan) {
            (Some(w), _) => ShortMode::Windows(w.into_iter().map(unpair).collect()),
            (None, Some((p, f))) => ShortMode::Rescan {
                path: PathBuf::from(p),
                format: f,
            },
            (None, None) => {
                return Err(Error::Config(
                    "index file has neither windows nor a rescan source".into(),
                ))
            }
        };
        Ok(OverlapIndex {
            n: wire.n,
            tokenizer_id: wire.tokenizer_id,
            ngram_hashes: wire.ngram_hashes.into_iter().map(unpair).collect(),
            short,
            corpus_fingerprint: wire.corpus_fingerprint,
            doc_count: wire.doc_count,
            token_count: wire.token_count,
        })
    }
}

fn sorted_pairs(set: &HashSet<u128>) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = set
        .iter()
        .map(|&h| ((h >> 64) as u64, h as u64))
        .collect();
    v.sort_unstable();
    v
}

fn unpair((hi, lo): (u64, u64)) -> u128 {
    ((hi as u128) << 64) | lo as u128
}

#[derive(Serialize, Deserialize)]
struct IndexWire {
    n: usize,
    tokenizer_id: String,
    corpus_fingerprint: String,
    doc_count: usize,
    token_count: usize,
    ngram_hashes: Vec<(u64, u64)>,
    #[serde(default)]
    windows: Option<Vec<(u64, u64)>>,
    #[serde(default)]
    rescan: Option<(String, CorpusFormat)>,
}

// ---------------------------------------------------------------------------
// Partitioning and delta reports
// ---------------------------------------------------------------------------

/// Clean / overlapping split of a test set against a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapPartition {
    pub clean_ids: Vec<String>,
    pub overlapping_ids: Vec<String>,
    pub percent_clean: f64,
}

impl OverlapPartition {
    pub fn percent_clean_display(&self) -> String {
        format!("{:.1}", self.percent_clean)
    }
}

/// Partition the test set by classifying each segment's reference (target)
/// text against the index.
pub fn partition_test_set(
    index: &OverlapIndex,
    test_set: &TestSet,
    tokenizer: &dyn OverlapTokenizer,
) -> Result<OverlapPartition> {
    let mut clean_ids = Vec::new();
    let mut overlapping_ids = Vec::new();
    for seg in test_set.segments() {
        if seg.target_text.trim().is_empty() {
            return Err(Error::EmptyInput(format!(
                "segment {:?} has no reference text",
                seg.id
            )));
        }
        match index.classify_segment(&seg.target_text, tokenizer)? {
            Classification::Clean => clean_ids.push(seg.id.clone()),
            Classification::Overlapping => overlapping_ids.push(seg.id.clone()),
        }
    }
    let total = test_set.len();
    Ok(OverlapPartition {
        percent_clean: 100.0 * clean_ids.len() as f64 / total as f64,
        clean_ids,
        overlapping_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsetScores {
    pub orig: Option<f64>,
    pub clean: Option<f64>,
    pub not_clean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDelta {
    pub metric: String,
    pub system_a: SubsetScores,
    pub system_b: SubsetScores,
    /// A - B per subset; None where a subset is empty.
    pub diff: SubsetScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub system_a: String,
    pub system_b: String,
    pub percent_clean: f64,
    pub metrics: Vec<MetricDelta>,
}

fn subset_mean(scores: &[f64], indices: &[usize]) -> Option<f64> {
    if indices.is_empty() {
        return None;
    }
    Some(indices.iter().map(|&i| scores[i]).sum::<f64>() / indices.len() as f64)
}

/// Corpus scores on the original, clean, and not-clean subsets for two
/// systems, plus the per-subset difference. Empty subsets are reported as
/// N/A, never an error.
pub fn overlap_delta_report(
    run_a: &ScoredRun,
    run_b: &ScoredRun,
    partition: &OverlapPartition,
    test_set: &TestSet,
    metrics: &[String],
) -> Result<DeltaReport> {
    for run in [run_a, run_b] {
        if run.len() != test_set.len() {
            return Err(Error::LengthMismatch {
                context: format!("run {:?} vs test set", run.run_id),
                expected: test_set.len(),
                actual: run.len(),
            });
        }
    }
    let id_to_idx: std::collections::HashMap<&str, usize> = test_set
        .segments()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let covered: BTreeSet<&str> = partition
        .clean_ids
        .iter()
        .chain(&partition.overlapping_ids)
        .map(String::as_str)
        .collect();
    if covered.len() != partition.clean_ids.len() + partition.overlapping_ids.len()
        || covered.len() != test_set.len()
        || !covered.iter().all(|id| id_to_idx.contains_key(id))
    {
        return Err(Error::Config(
            "partition does not cover the test set exactly".into(),
        ));
    }
    let resolve = |ids: &[String]| -> Vec<usize> {
        ids.iter().map(|id| id_to_idx[id.as_str()]).collect()
    };
    let clean_idx = resolve(&partition.clean_ids);
    let overlap_idx = resolve(&partition.overlapping_ids);
    let all_idx: Vec<usize> = (0..test_set.len()).collect();

    let mut rows = Vec::new();
    for metric in metrics {
        let a = run_a.scores(metric)?;
        let b = run_b.scores(metric)?;
        let score_subsets = |scores: &[f64]| SubsetScores {
            orig: subset_mean(scores, &all_idx),
            clean: subset_mean(scores, &clean_idx),
            not_clean: subset_mean(scores, &overlap_idx),
        };
        let sa = score_subsets(a);
        let sb = score_subsets(b);
        let diff = SubsetScores {
            orig: sa.orig.zip(sb.orig).map(|(x, y)| x - y),
            clean: sa.clean.zip(sb.clean).map(|(x, y)| x - y),
            not_clean: sa.not_clean.zip(sb.not_clean).map(|(x, y)| x - y),
        };
        rows.push(MetricDelta {
            metric: metric.clone(),
            system_a: sa,
            system_b: sb,
            diff,
        });
    }
    Ok(DeltaReport {
        system_a: run_a.system.clone(),
        system_b: run_b.system.clone(),
        percent_clean: partition.percent_clean,
        metrics: rows,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "N/A".to_string(),
    }
}

impl DeltaReport {
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "%Clean: {:.1}\n\n| Metric | System | Orig | Clean | ¬Clean |\n|---|---|---|---|---|\n",
            self.percent_clean
        );
        for row in &self.metrics {
            for (name, scores) in [
                (self.system_a.as_str(), &row.system_a),
                (self.system_b.as_str(), &row.system_b),
                ("Diff", &row.diff),
            ] {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    row.metric,
                    name,
                    cell(scores.orig),
                    cell(scores.clean),
                    cell(scores.not_clean),
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n: usize) -> OverlapConfig {
        OverlapConfig {
            n,
            ..OverlapConfig::default()
        }
    }

    fn words(n: usize, prefix: &str) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn window_count_single_15_token_doc() {
        let tok = DefaultTokenizer;
        let index =
            build_index_from_docs([words(15, "w")], &small_cfg(15), &tok).unwrap();
        assert_eq!(index.ngram_count(), 1);
    }

    #[test]
    fn window_count_20_token_doc() {
        let tok = DefaultTokenizer;
        let index =
            build_index_from_docs([words(20, "w")], &small_cfg(15), &tok).unwrap();
        assert_eq!(index.ngram_count(), 6); // 20 - 15 + 1
    }

    #[test]
    fn empty_corpus_everything_clean() {
        let tok = DefaultTokenizer;
        let index =
            build_index_from_docs(Vec::<String>::new(), &small_cfg(15), &tok).unwrap();
        assert_eq!(
            index.classify_segment(&words(30, "w"), &tok).unwrap(),
            Classification::Clean
        );
        assert_eq!(
            index.classify_segment("short one", &tok).unwrap(),
            Classification::Clean
        );
    }

    #[test]
    fn short_segment_contiguous_rule() {
        let tok = DefaultTokenizer;
        let index = build_index_from_docs(["x a b c y"], &small_cfg(15), &tok).unwrap();
        assert_eq!(
            index.classify_segment("a b c", &tok).unwrap(),
            Classification::Overlapping
        );
        // Order matters: same tokens, different sequence.
        assert_eq!(
            index.classify_segment("a c b", &tok).unwrap(),
            Classification::Clean
        );
    }

    #[test]
    fn long_segment_single_shared_window() {
        let tok = DefaultTokenizer;
        // Training doc contains exactly one 15-token window of the segment.
        let shared = words(15, "s");
        let training = format!("{} {}", words(5, "t"), shared);
        let segment = format!("{} {}", shared, words(15, "u"));
        let index = build_index_from_docs([training], &small_cfg(15), &tok).unwrap();
        assert_eq!(
            index.classify_segment(&segment, &tok).unwrap(),
            Classification::Overlapping
        );
    }

    #[test]
    fn rescan_mode_matches_windows_mode() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "the quick brown fox jumps").unwrap();
        writeln!(f, "over the lazy dog today").unwrap();
        let tok = DefaultTokenizer;

        let windows_cfg = small_cfg(4);
        let indexed =
            build_index_from_path(f.path(), CorpusFormat::Text, &windows_cfg, &tok).unwrap();

        let rescan_cfg = OverlapConfig {
            n: 4,
            short_window_token_bound: 0,
        };
        let rescan =
            build_index_from_path(f.path(), CorpusFormat::Text, &rescan_cfg, &tok).unwrap();

        for segment in ["quick brown fox", "brown fox over", "lazy dog", "dog lazy"] {
            assert_eq!(
                indexed.classify_segment(segment, &tok).unwrap(),
                rescan.classify_segment(segment, &tok).unwrap(),
                "{segment}"
            );
        }
    }

    #[test]
    fn tokenizer_mismatch_rejected() {
        let tok = DefaultTokenizer;
        let index = build_index_from_docs(["a b c"], &small_cfg(3), &tok).unwrap();
        struct OtherTok;
        impl OverlapTokenizer for OtherTok {
            fn id(&self) -> &str {
                "other"
            }
            fn tokenize(&self, t: &str) -> Result<Vec<String>> {
                Ok(text::tokenize(t, true))
            }
        }
        assert!(matches!(
            index.classify_segment("a b", &OtherTok),
            Err(Error::TokenizerMismatch { .. })
        ));
    }

    #[test]
    fn index_save_load_round_trip() {
        let tok = DefaultTokenizer;
        let index = build_index_from_docs(
            ["x a b c y", "another training document here"],
            &small_cfg(3),
            &tok,
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        index.save(f.path()).unwrap();
        let loaded = OverlapIndex::load(f.path()).unwrap();
        assert_eq!(index, loaded);
    }

    #[test]
    fn jsonl_corpus_format() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"text\": \"alpha beta gamma delta\"}}").unwrap();
        let tok = DefaultTokenizer;
        let index =
            build_index_from_path(f.path(), CorpusFormat::Jsonl, &small_cfg(3), &tok).unwrap();
        assert_eq!(
            index.classify_segment("alpha beta gamma", &tok).unwrap(),
            Classification::Overlapping
        );
    }

    #[test]
    fn partition_percent_invariant_to_segment_order() {
        use crate::corpus::{LangPair, SegmentPair, TestSet};
        let tok = DefaultTokenizer;
        let index = build_index_from_docs(["alpha beta gamma delta"], &small_cfg(3), &tok).unwrap();
        let seg = |id: &str, target: &str| SegmentPair {
            id: id.to_string(),
            source_text: "src".into(),
            target_text: target.to_string(),
            granularity: crate::corpus::Granularity::Sentence,
            target_original: false,
            doc_id: Some("d".into()),
            genre: None,
        };
        let segments = vec![
            seg("a", "alpha beta gamma"),
            seg("b", "unrelated words here"),
            seg("c", "beta gamma delta"),
        ];
        let mut reversed = segments.clone();
        reversed.reverse();
        let lp = LangPair::new("English", "German");
        let forward = TestSet::new("t", lp.clone(), segments, None).unwrap();
        let backward = TestSet::new("t", lp, reversed, None).unwrap();
        let p1 = partition_test_set(&index, &forward, &tok).unwrap();
        let p2 = partition_test_set(&index, &backward, &tok).unwrap();
        assert_eq!(p1.percent_clean, p2.percent_clean);
    }

    #[test]
    fn percent_clean_reported_to_one_decimal() {
        // 9 of 13 clean = 69.23..% renders as "69.2".
        let partition = OverlapPartition {
            clean_ids: (0..9).map(|i| format!("c{i}")).collect(),
            overlapping_ids: (0..4).map(|i| format!("o{i}")).collect(),
            percent_clean: 100.0 * 9.0 / 13.0,
        };
        assert_eq!(partition.percent_clean_display(), "69.2");
    }

    #[test]
    fn wordpiece_greedy_longest_match() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for piece in ["un", "##translat", "##able", "hello", "##s"] {
            writeln!(f, "{piece}").unwrap();
        }
        let tok = WordpieceTokenizer::from_vocab_file(f.path()).unwrap();
        assert_eq!(
            tok.tokenize("untranslatable hellos").unwrap(),
            vec!["un", "##translat", "##able", "hello", "##s"]
        );
        assert_eq!(tok.tokenize("xyz").unwrap(), vec!["[UNK]"]);
        assert!(tok.id().starts_with("wordpiece:"));
    }
}
