//! Scored-run management: ingesting per-segment metric scores produced by
//! external metric tools, corpus aggregation, median-run selection, score
//! difference histograms, and variance reports over seeded runs.
//!
//! Metric scores are stored unit-agnostic; a range heuristic warns when
//! 0-1 and 0-100 scales appear to be mixed but never rescales.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One system's outputs for a test set plus per-segment metric scores,
/// aligned with test-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub run_id: String,
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_set: Option<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub metric_scores: BTreeMap<String, Vec<f64>>,
}

impl ScoredRun {
    pub fn new(
        run_id: impl Into<String>,
        system: impl Into<String>,
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> Self {
        ScoredRun {
            run_id: run_id.into(),
            system: system.into(),
            seed,
            test_set: None,
            outputs,
            metric_scores: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn scores(&self, metric: &str) -> Result<&[f64]> {
        self.metric_scores
            .get(metric)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingMetric {
                metric: metric.to_string(),
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let run: ScoredRun = serde_json::from_reader(BufReader::new(file))?;
        for (metric, scores) in &run.metric_scores {
            if scores.len() != run.outputs.len() {
                return Err(Error::LengthMismatch {
                    context: format!("metric {metric:?} in {}", path.display()),
                    expected: run.outputs.len(),
                    actual: scores.len(),
                });
            }
        }
        Ok(run)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Apparent scale of a score vector, used only to warn about mixed units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScoreScale {
    Unit,
    Percent,
}

fn detect_scale(scores: &[f64]) -> Option<ScoreScale> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 1.5 {
        Some(ScoreScale::Percent)
    } else if max > 0.0 {
        Some(ScoreScale::Unit)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestWarning {
    pub metric: String,
    pub message: String,
}

/// Attach a score file (one real per line, test-set order) to a run.
/// The line count must equal the segment count; values are stored as-is.
pub fn ingest_segment_scores(
    run: &mut ScoredRun,
    metric: &str,
    path: impl AsRef<Path>,
) -> Result<Vec<IngestWarning>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::with_capacity(run.len());
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::data(path, line_no, format!("read failed: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(Error::data(path, line_no, "blank score line"));
        }
        let value: f64 = trimmed
            .parse()
            .map_err(|e| Error::data(path, line_no, format!("bad score {trimmed:?}: {e}")))?;
        if !value.is_finite() {
            return Err(Error::data(path, line_no, format!("non-finite score {value}")));
        }
        scores.push(value);
    }
    if scores.len() != run.len() {
        return Err(Error::LengthMismatch {
            context: format!("score file {}", path.display()),
            expected: run.len(),
            actual: scores.len(),
        });
    }

    let mut warnings = Vec::new();
    if let Some(new_scale) = detect_scale(&scores) {
        for (existing, values) in &run.metric_scores {
            if let Some(old_scale) = detect_scale(values) {
                if old_scale != new_scale {
                    warnings.push(IngestWarning {
                        metric: metric.to_string(),
                        message: format!(
                            "metric {metric:?} looks {new_scale:?}-scaled but {existing:?} looks {old_scale:?}-scaled; stored as-is"
                        ),
                    });
                }
            }
        }
    }
    run.metric_scores.insert(metric.to_string(), scores);
    Ok(warnings)
}

/// Arithmetic mean of the per-segment scores for one metric.
pub fn corpus_score(run: &ScoredRun, metric: &str) -> Result<f64> {
    let scores = run.scores(metric)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput(format!(
            "run {:?} has no segments",
            run.run_id
        )));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Pick the run whose corpus score is the median of the set. Requires an odd
/// run count: the protocol reports an actual run's outputs, and there is no
/// run corresponding to an interpolated midpoint. Ties break by run_id.
pub fn select_median_run<'a>(runs: &'a [ScoredRun], metric: &str) -> Result<&'a ScoredRun> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("no runs given".into()));
    }
    if runs.len().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "median selection needs an odd number of runs, got {}",
            runs.len()
        )));
    }
    let mut scored: Vec<(f64, &ScoredRun)> = runs
        .iter()
        .map(|r| Ok((corpus_score(r, metric)?, r)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.run_id.cmp(&b.1.run_id))
    });
    let median_score = scored[scored.len() / 2].0;
    // Among runs at the median value, take the first by run_id.
    let chosen = scored
        .iter()
        .filter(|(s, _)| *s == median_score)
        .map(|&(_, r)| r)
        .min_by(|a, b| a.run_id.cmp(&b.run_id))
        .expect("median value came from the list");
    Ok(chosen)
}

/// Histogram of per-segment score differences over half-open bins
/// `[edge, edge + width)`. Bin keys are integer multiples of the width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Bin index -> count; the lower edge of bin `i` is `i * bin_width`.
    pub bins: BTreeMap<i64, usize>,
    pub total: usize,
    /// Segments with |difference| strictly greater than one bin width.
    pub exceeding_count: usize,
}

impl Histogram {
    pub fn lower_edge(&self, bin: i64) -> f64 {
        bin as f64 * self.bin_width
    }

    /// Caption-style observation line, e.g.
    /// "516 of 1000 segments differ by more than 1 point".
    pub fn summary_line(&self) -> String {
        format!(
            "{} of {} segments differ by more than {} point{}",
            self.exceeding_count,
            self.total,
            self.bin_width,
            if self.bin_width == 1.0 { "" } else { "s" }
        )
    }
}

/// Bin the per-segment differences (A - B) for one metric.
pub fn diff_histogram(
    run_a: &ScoredRun,
    run_b: &ScoredRun,
    metric: &str,
    bin_width: f64,
) -> Result<Histogram> {
    if bin_width <= 0.0 || !bin_width.is_finite() {
        return Err(Error::Config(format!("bin width must be positive, got {bin_width}")));
    }
    check_aligned(run_a, run_b)?;
    let a = run_a.scores(metric)?;
    let b = run_b.scores(metric)?;
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    let mut exceeding = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = x - y;
        let bin = (diff / bin_width).floor() as i64;
        *bins.entry(bin).or_insert(0) += 1;
        if diff.abs() > bin_width {
            exceeding += 1;
        }
    }
    Ok(Histogram {
        bin_width,
        bins,
        total: a.len(),
        exceeding_count: exceeding,
    })
}

fn check_aligned(a: &ScoredRun, b: &ScoredRun) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: format!("runs {:?} and {:?}", a.run_id, b.run_id),
            expected: a.len(),
            actual: b.len(),
        });
    }
    if let (Some(ta), Some(tb)) = (&a.test_set, &b.test_set) {
        if ta != tb {
            return Err(Error::Config(format!(
                "runs scored on different test sets: {ta:?} vs {tb:?}"
            )));
        }
    }
    Ok(())
}

/// Order statistics of run corpus scores for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVariance {
    pub metric: String,
    pub per_run: Vec<(String, f64)>,
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    pub range: f64,
}

/// Min/avg/max/range of corpus scores per metric across runs.
pub fn variance_report(runs: &[ScoredRun]) -> Result<Vec<MetricVariance>> {
    if runs.len() < 2 {
        return Err(Error::Config(format!(
            "variance report needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    // Metrics present in every run, in sorted order.
    let mut metrics: Vec<String> = runs[0].metric_scores.keys().cloned().collect();
    metrics.retain(|m| runs.iter().all(|r| r.metric_scores.contains_key(m)));

    let mut report = Vec::new();
    for metric in metrics {
        let per_run: Vec<(String, f64)> = runs
            .iter()
            .map(|r| Ok((r.run_id.clone(), corpus_score(r, &metric)?)))
            .collect::<Result<_>>()?;
        let scores: Vec<f64> = per_run.iter().map(|&(_, s)| s).collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let avg = scores.iter().sum::<f64>() / scores.len() as f64;
        report.push(MetricVariance {
            metric,
            per_run,
            min,
            avg,
            max,
            range: max - min,
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Report emitters
// ---------------------------------------------------------------------------

/// System-by-metric grid of corpus scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemGrid {
    pub metrics: Vec<String>,
    pub rows: Vec<SystemGridRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemGridRow {
    pub system: String,
    pub run_id: String,
    pub scores: BTreeMap<String, f64>,
}

pub fn system_grid(runs: &[ScoredRun], metrics: &[String]) -> Result<SystemGrid> {
    let mut rows = Vec::new();
    for run in runs {
        let mut scores = BTreeMap::new();
        for metric in metrics {
            scores.insert(metric.clone(), corpus_score(run, metric)?);
        }
        rows.push(SystemGridRow {
            system: run.system.clone(),
            run_id: run.run_id.clone(),
            scores,
        });
    }
    Ok(SystemGrid {
        metrics: metrics.to_vec(),
        rows,
    })
}

impl SystemGrid {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| System |");
        for m in &self.metrics {
            out.push_str(&format!(" {m} |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.metrics {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.system));
            for m in &self.metrics {
                out.push_str(&format!(" {:.1} |", row.scores[m]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn variance_to_markdown(report: &[MetricVariance]) -> String {
    let mut out = String::new();
    for mv in report {
        out.push_str(&format!("### {}\n\n| Run | Score |\n|---|---|\n", mv.metric));
        for (run_id, score) in &mv.per_run {
            out.push_str(&format!("| {run_id} | {score:.2} |\n"));
        }
        out.push_str(&format!(
            "\nmin {:.2} / avg {:.2} / max {:.2} / range {:.2}\n\n",
            mv.min, mv.avg, mv.max, mv.range
        ));
    }
    out
}
