//! Paired permutation significance testing (PERM-BOTH) over per-segment
//! metric scores, and the pairwise p-value matrix across systems.
//!
//! Each permutation independently swaps the two systems' scores at each
//! segment with probability 1/2. Short inputs (n <= 12) are enumerated
//! exhaustively over all 2^n sign assignments; longer inputs use Monte Carlo
//! with the add-one estimator, so the p-value is never exactly zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{corpus_score, ScoredRun};
use crate::hash::mix_seed;

/// Inputs at or below this length are enumerated exactly.
pub const EXHAUSTIVE_MAX_N: usize = 12;

/// Comparisons of permuted against observed statistics absorb float noise at
/// this scale so exact ties count as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub num_permutations: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub sidedness: Sidedness,
    #[serde(default)]
    pub direction: Direction,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            num_permutations: 10_000,
            seed: 0,
            alpha: 0.05,
            sidedness: Sidedness::OneSided,
            direction: Direction::HigherBetter,
        }
    }
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_permutations == 0 {
            return Err(Error::Config("num_permutations must be >= 1".into()));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    /// mean(A) - mean(B), oriented so positive favours the better direction.
    pub observed_statistic: f64,
    pub num_permutations: usize,
    pub significant: bool,
    pub exhaustive: bool,
}

fn statistic(diffs: &[f64]) -> f64 {
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

fn exceeds(permuted: f64, observed: f64, sidedness: Sidedness) -> bool {
    match sidedness {
        Sidedness::OneSided => permuted >= observed - TIE_EPS,
        Sidedness::TwoSided => permuted.abs() >= observed.abs() - TIE_EPS,
    }
}

/// How permutations are enumerated. `Auto` picks exhaustive enumeration for
/// n <= 12 and Monte Carlo otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermMethod {
    #[default]
    Auto,
    Exhaustive,
    MonteCarlo,
}

/// PERM-BOTH paired permutation test over aligned per-segment scores.
pub fn perm_both_test(
    scores_a: &[f64],
    scores_b: &[f64],
    cfg: &SignificanceConfig,
) -> Result<SignificanceResult> {
    perm_both_test_with(scores_a, scores_b, cfg, PermMethod::Auto)
}

/// Like `perm_both_test` but with the enumeration method pinned; used to
/// cross-validate the Monte Carlo estimator against exhaustive enumeration.
pub fn perm_both_test_with(
    scores_a: &[f64],
    scores_b: &[f64],
    cfg: &SignificanceConfig,
    method: PermMethod,
) -> Result<SignificanceResult> {
    cfg.validate()?;
    if scores_a.len() != scores_b.len() {
        return Err(Error::LengthMismatch {
            context: "permutation test score vectors".into(),
            expected: scores_a.len(),
            actual: scores_b.len(),
        });
    }
    let n = scores_a.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "permutation test needs at least 2 segments, got {n}"
        )));
    }
    let exhaustive = match method {
        PermMethod::Auto => n <= EXHAUSTIVE_MAX_N,
        PermMethod::Exhaustive => {
            if n > 20 {
                return Err(Error::Config(format!(
                    "exhaustive enumeration over 2^{n} assignments is infeasible"
                )));
            }
            true
        }
        PermMethod::MonteCarlo => false,
    };
    // Swapping A_i and B_i flips the sign of the paired difference, so the
    // test enumerates sign assignments of the difference vector.
    let diffs: Vec<f64> = match cfg.direction {
        Direction::HigherBetter => scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect(),
        Direction::LowerBetter => scores_a.iter().zip(scores_b).map(|(a, b)| b - a).collect(),
    };
    let observed = statistic(&diffs);

    if exhaustive {
        let total = 1usize << n;
        let mut hits = 0usize;
        let mut signed = vec![0.0f64; n];
        for mask in 0..total {
            for (i, s) in signed.iter_mut().enumerate() {
                *s = if mask >> i & 1 == 1 { -diffs[i] } else { diffs[i] };
            }
            if exceeds(statistic(&signed), observed, cfg.sidedness) {
                hits += 1;
            }
        }
        let p_value = hits as f64 / total as f64;
        return Ok(SignificanceResult {
            p_value,
            observed_statistic: observed,
            num_permutations: total,
            significant: p_value < cfg.alpha,
            exhaustive: true,
        });
    }

    // Monte Carlo: every permutation derives its own generator from the
    // master seed and its index, so parallel execution is identical to
    // serial regardless of thread count.
    let hits: usize = (0..cfg.num_permutations)
        .into_par_iter()
        .map(|perm| {
            let mut word = 0u64;
            let mut signed_sum = 0.0f64;
            for (i, &d) in diffs.iter().enumerate() {
                if i % 64 == 0 {
                    word = mix_seed(cfg.seed, (perm as u64) << 20 | (i / 64) as u64);
                }
                let flip = word >> (i % 64) & 1 == 1;
                signed_sum += if flip { -d } else { d };
            }
            usize::from(exceeds(signed_sum / diffs.len() as f64, observed, cfg.sidedness))
        })
        .sum();

    let p_value = (1 + hits) as f64 / (cfg.num_permutations + 1) as f64;
    Ok(SignificanceResult {
        p_value,
        observed_statistic: observed,
        num_permutations: cfg.num_permutations,
        significant: p_value < cfg.alpha,
        exhaustive: false,
    })
}

/// One cell of the pairwise matrix; `a` is the better system of the pair by
/// corpus score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseCell {
    pub better: String,
    pub worse: String,
    pub result: SignificanceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseMatrix {
    pub metric: String,
    /// System names ordered best first by corpus score.
    pub order: Vec<String>,
    pub corpus_scores: Vec<f64>,
    pub cells: Vec<PairwiseCell>,
    pub alpha: f64,
}

/// One test per unordered pair of systems, better system first.
pub fn pairwise_matrix(
    systems: &[ScoredRun],
    metric: &str,
    cfg: &SignificanceConfig,
) -> Result<PairwiseMatrix> {
    cfg.validate()?;
    if systems.len() < 2 {
        return Err(Error::Config(format!(
            "pairwise matrix needs at least 2 systems, got {}",
            systems.len()
        )));
    }
    let mut ranked: Vec<(&ScoredRun, f64)> = systems
        .iter()
        .map(|r| Ok((r, corpus_score(r, metric)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        let ord = a
            .1
            .partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal);
        match cfg.direction {
            Direction::HigherBetter => ord.reverse(),
            Direction::LowerBetter => ord,
        }
        .then_with(|| a.0.system.cmp(&b.0.system))
    });

    let mut cells = Vec::new();
    for i in 0..ranked.len() {
        for j in (i + 1)..ranked.len() {
            let (better, _) = ranked[i];
            let (worse, _) = ranked[j];
            let pair_cfg = SignificanceConfig {
                seed: mix_seed(cfg.seed, (i as u64) << 32 | j as u64),
                ..cfg.clone()
            };
            let result =
                perm_both_test(better.scores(metric)?, worse.scores(metric)?, &pair_cfg)?;
            cells.push(PairwiseCell {
                better: better.system.clone(),
                worse: worse.system.clone(),
                result,
            });
        }
    }
    Ok(PairwiseMatrix {
        metric: metric.to_string(),
        order: ranked.iter().map(|(r, _)| r.system.clone()).collect(),
        corpus_scores: ranked.iter().map(|&(_, s)| s).collect(),
        cells,
        alpha: cfg.alpha,
    })
}

impl PairwiseMatrix {
    fn cell_for(&self, a: &str, b: &str) -> Option<&PairwiseCell> {
        self.cells
            .iter()
            .find(|c| c.better == a && c.worse == b)
    }

    /// Upper-triangular Markdown table; cells with p < alpha are starred.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| |");
        for name in &self.order {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str("\n|---|");
        for _ in &self.order {
            out.push_str("---|");
        }
        out.push('\n');
        for (i, row_name) in self.order.iter().enumerate() {
            out.push_str(&format!("| {row_name} |"));
            for (j, col_name) in self.order.iter().enumerate() {
                if j <= i {
                    out.push_str(" - |");
                } else {
                    let cell = self.cell_for(row_name, col_name).expect("cell exists");
                    let mark = if cell.result.p_value < self.alpha { "*" } else { "" };
                    out.push_str(&format!(" {:.3}{} |", cell.result.p_value, mark));
                }
            }
            out.push('\n');
        }
        out
    }
}
