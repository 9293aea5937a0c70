//! MQM scoring from span-level error annotations: weighted severities,
//! per-segment averaging over annotators, the first-k-segments-per-document
//! evaluation window, accuracy/fluency decomposition, and category counts.
//!
//! Lower scores are better. Weighting: major errors count 5, minor errors 1,
//! except minor punctuation errors which count 0.1. No per-sentence error
//! cap is applied.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TestSet;
use crate::error::{Error, Result};

pub const DEFAULT_FIRST_K: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Major,
    Minor,
}

impl Severity {
    /// Case-insensitive parse, per annotation-file convention.
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "major" => Ok(Severity::Major),
            "minor" => Ok(Severity::Minor),
            other => Err(Error::Config(format!("unknown severity {other:?}"))),
        }
    }
}

/// One error span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqmAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub doc_id: String,
    pub segment_id: String,
    pub annotator_id: String,
    pub category: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqmWeights {
    pub major: f64,
    pub minor: f64,
    pub minor_punctuation: f64,
    /// Optional override for "Non-translation!"; the default schema weights
    /// it like any major error, but related methodology elsewhere uses a
    /// larger weight, so reports record which weight was in force.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nontranslation_override: Option<f64>,
}

impl Default for MqmWeights {
    fn default() -> Self {
        MqmWeights {
            major: 5.0,
            minor: 1.0,
            minor_punctuation: 0.1,
            nontranslation_override: None,
        }
    }
}

impl MqmWeights {
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![self.major, self.minor, self.minor_punctuation];
        all.extend(self.nontranslation_override);
        if all.into_iter().any(|w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("MQM weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub const NON_TRANSLATION: &str = "Non-translation!";
pub const PUNCTUATION: &str = "Fluency/Punctuation";

/// The registered category taxonomy.
pub fn default_taxonomy() -> BTreeSet<String> {
    [
        NON_TRANSLATION,
        "Accuracy/Mistranslation",
        "Accuracy/Omission",
        "Accuracy/Addition",
        "Accuracy/Untranslated",
        "Terminology/Inappropriate for context",
        "Terminology/Inconsistent",
        "Fluency/Grammar",
        "Fluency/Register",
        "Fluency/Inconsistency",
        PUNCTUATION,
        "Fluency/Spelling",
        "Fluency/Encoding",
        "Style/Awkward",
        "Locale/Date",
        "Locale/Name",
        "Locale/Time",
        "Source error",
        "Other",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Score decomposition group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Accuracy,
    Fluency,
    Residual,
}

fn group_of(category: &str) -> Group {
    if category == NON_TRANSLATION
        || category.starts_with("Accuracy/")
        || category.starts_with("Terminology/")
    {
        Group::Accuracy
    } else if category.starts_with("Fluency/")
        || category.starts_with("Style/")
        || category.starts_with("Locale/")
    {
        Group::Fluency
    } else {
        Group::Residual
    }
}

fn weight_of(ann: &MqmAnnotation, weights: &MqmWeights) -> f64 {
    if ann.category == NON_TRANSLATION {
        if let Some(w) = weights.nontranslation_override {
            return w;
        }
    }
    match ann.severity {
        Severity::Major => weights.major,
        Severity::Minor if ann.category == PUNCTUATION => weights.minor_punctuation,
        Severity::Minor => weights.minor,
    }
}

fn check_categories<'a>(
    annotations: impl IntoIterator<Item = &'a MqmAnnotation>,
    taxonomy: &BTreeSet<String>,
) -> Result<()> {
    for ann in annotations {
        if !taxonomy.contains(&ann.category) {
            return Err(Error::UnknownCategory {
                category: ann.category.clone(),
            });
        }
    }
    Ok(())
}

/// Score one segment: sum of weights per annotator, averaged over the
/// distinct annotators that covered the segment. No annotations means a
/// perfect segment (0.0).
pub fn segment_score(annotations: &[MqmAnnotation], weights: &MqmWeights) -> Result<f64> {
    weights.validate()?;
    if annotations.is_empty() {
        return Ok(0.0);
    }
    let taxonomy = default_taxonomy();
    check_categories(annotations, &taxonomy)?;
    let segment_id = &annotations[0].segment_id;
    if annotations.iter().any(|a| &a.segment_id != segment_id) {
        return Err(Error::Config(
            "segment_score given annotations for multiple segments".into(),
        ));
    }
    let mut per_annotator: BTreeMap<&str, f64> = BTreeMap::new();
    for ann in annotations {
        *per_annotator.entry(ann.annotator_id.as_str()).or_insert(0.0) +=
            weight_of(ann, weights);
    }
    Ok(per_annotator.values().sum::<f64>() / per_annotator.len() as f64)
}

/// Major/minor counts per category, with all registered categories present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub per_category: BTreeMap<String, (u64, u64)>,
    pub total_major: u64,
    pub total_minor: u64,
}

impl CategoryCounts {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Category | Major | minor |\n|---|---|---|\n");
        for (cat, (major, minor)) in &self.per_category {
            out.push_str(&format!("| {cat} | {major} | {minor} |\n"));
        }
        out.push_str(&format!(
            "| Total Errors | {} | {} |\n",
            self.total_major, self.total_minor
        ));
        out
    }
}

/// Exact error tally; the totals row equals the sum of the rows.
pub fn category_counts(annotations: &[MqmAnnotation]) -> Result<CategoryCounts> {
    let taxonomy = default_taxonomy();
    check_categories(annotations, &taxonomy)?;
    let mut per_category: BTreeMap<String, (u64, u64)> = taxonomy
        .iter()
        .map(|c| (c.clone(), (0u64, 0u64)))
        .collect();
    for ann in annotations {
        let entry = per_category.get_mut(&ann.category).expect("validated");
        match ann.severity {
            Severity::Major => entry.0 += 1,
            Severity::Minor => entry.1 += 1,
        }
    }
    let total_major = per_category.values().map(|&(m, _)| m).sum();
    let total_minor = per_category.values().map(|&(_, m)| m).sum();
    Ok(CategoryCounts {
        per_category,
        total_major,
        total_minor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqmReport {
    /// Mean of per-segment scores over evaluated segments; lower is better.
    pub system_score: f64,
    pub accuracy_score: f64,
    pub fluency_score: f64,
    /// "Other" and "Source error" contributions, outside both groups.
    pub residual_score: f64,
    /// Per-segment scores for evaluated segments, in test-set order.
    pub segment_scores: Vec<(String, f64)>,
    pub category_counts: CategoryCounts,
    pub evaluated_segments: usize,
    pub first_k: usize,
    /// The weighting in force, recorded in every report.
    pub weights: MqmWeights,
}

/// Score a whole annotation set against a test set, evaluating only the
/// first `first_k` segments of each document. Unannotated evaluated segments
/// count as perfect; annotations on segments beyond the window are ignored;
/// annotations on unknown segments are an error.
pub fn system_score(
    annotations: &[MqmAnnotation],
    test_set: &TestSet,
    first_k: usize,
    weights: &MqmWeights,
) -> Result<MqmReport> {
    weights.validate()?;
    let taxonomy = default_taxonomy();
    check_categories(annotations, &taxonomy)?;

    let known: HashSet<&str> = test_set.segments().iter().map(|s| s.id.as_str()).collect();
    for ann in annotations {
        if !known.contains(ann.segment_id.as_str()) {
            return Err(Error::Config(format!(
                "annotation references unknown segment {:?}",
                ann.segment_id
            )));
        }
    }

    // Evaluation window: the first `first_k` segments of each document, in
    // test-set order.
    let mut doc_seen: HashMap<&str, usize> = HashMap::new();
    let mut evaluated: Vec<&str> = Vec::new();
    let mut evaluated_set: HashSet<&str> = HashSet::new();
    for seg in test_set.segments() {
        let doc = seg.doc_id.as_deref().unwrap_or("");
        let seen = doc_seen.entry(doc).or_insert(0);
        *seen += 1;
        if *seen <= first_k {
            evaluated.push(seg.id.as_str());
            evaluated_set.insert(seg.id.as_str());
        }
    }
    if evaluated.is_empty() {
        return Err(Error::EmptyInput("no segments fall in the evaluation window".into()));
    }

    let mut by_segment: HashMap<&str, Vec<&MqmAnnotation>> = HashMap::new();
    for ann in annotations {
        if evaluated_set.contains(ann.segment_id.as_str()) {
            by_segment.entry(ann.segment_id.as_str()).or_default().push(ann);
        }
    }

    let mut segment_scores = Vec::with_capacity(evaluated.len());
    let mut acc_sum = 0.0f64;
    let mut flu_sum = 0.0f64;
    let mut res_sum = 0.0f64;
    let mut counted: Vec<&MqmAnnotation> = Vec::new();
    for seg_id in &evaluated {
        let (acc, flu, res) = match by_segment.get(seg_id) {
            None => (0.0, 0.0, 0.0),
            Some(anns) => {
                counted.extend(anns.iter().copied());
                // Per-annotator group sums, averaged over annotators that
                // covered this segment.
                let mut per_annotator: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
                for ann in anns {
                    let entry = per_annotator
                        .entry(ann.annotator_id.as_str())
                        .or_insert((0.0, 0.0, 0.0));
                    let w = weight_of(ann, weights);
                    match group_of(&ann.category) {
                        Group::Accuracy => entry.0 += w,
                        Group::Fluency => entry.1 += w,
                        Group::Residual => entry.2 += w,
                    }
                }
                let n = per_annotator.len() as f64;
                let acc = per_annotator.values().map(|v| v.0).sum::<f64>() / n;
                let flu = per_annotator.values().map(|v| v.1).sum::<f64>() / n;
                let res = per_annotator.values().map(|v| v.2).sum::<f64>() / n;
                (acc, flu, res)
            }
        };
        acc_sum += acc;
        flu_sum += flu;
        res_sum += res;
        segment_scores.push((seg_id.to_string(), acc + flu + res));
    }

    let n = evaluated.len() as f64;
    let accuracy_score = acc_sum / n;
    let fluency_score = flu_sum / n;
    let residual_score = res_sum / n;
    let counts = {
        let owned: Vec<MqmAnnotation> = counted.into_iter().cloned().collect();
        category_counts(&owned)?
    };
    Ok(MqmReport {
        // Built from the components so the decomposition identity holds
        // exactly, pre-rounding.
        system_score: accuracy_score + fluency_score + residual_score,
        accuracy_score,
        fluency_score,
        residual_score,
        segment_scores,
        category_counts: counts,
        evaluated_segments: evaluated.len(),
        first_k,
        weights: weights.clone(),
    })
}

/// Accuracy ("Accuracy/*", "Terminology/*", "Non-translation!"), fluency
/// ("Fluency/*", "Style/*", "Locale/*"), and residual ("Other",
/// "Source error") components. They sum exactly to the system score.
pub fn decompose(report: &MqmReport) -> (f64, f64, f64) {
    (
        report.accuracy_score,
        report.fluency_score,
        report.residual_score,
    )
}

/// Load annotation JSONL: `{"system", "doc_id", "segment_id",
/// "annotator_id", "category", "severity", "span"?}` with case-insensitive
/// severities, categories validated against the registered taxonomy.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<MqmAnnotation>> {
    #[derive(Deserialize)]
    struct RawAnnotation {
        #[serde(default)]
        system: Option<String>,
        doc_id: String,
        segment_id: String,
        annotator_id: String,
        category: String,
        severity: String,
        #[serde(default)]
        span: Option<String>,
    }

    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let taxonomy = default_taxonomy();
    let mut annotations = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::data(path, line_no, format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, line_no, format!("bad annotation: {e}")))?;
        let severity = Severity::parse(&raw.severity)
            .map_err(|e| Error::data(path, line_no, e.to_string()))?;
        if !taxonomy.contains(&raw.category) {
            return Err(Error::data(
                path,
                line_no,
                format!("unknown MQM category {:?}", raw.category),
            ));
        }
        annotations.push(MqmAnnotation {
            system: raw.system,
            doc_id: raw.doc_id,
            segment_id: raw.segment_id,
            annotator_id: raw.annotator_id,
            category: raw.category,
            severity,
            span: raw.span,
        });
    }
    Ok(annotations)
}
