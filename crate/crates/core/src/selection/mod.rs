//! In-context example selection: seeded random draws, kNN over bag-of-words
//! or dense embeddings, and maximum-likelihood fixed-prompt selection.

pub mod bow;
pub mod embed;
pub mod index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bow::{bow_distance, BowVector, Vocabulary};
pub use embed::{EmbeddingProvider, HashEmbedder, HttpEmbedder};
pub use index::{AnnParams, IndexMode, IndexSpace, QueryVector, VectorIndex};

use crate::backend::{ScoreRequest, TextBackend};
use crate::corpus::{Pool, PoolKind, SegmentPair};
use crate::error::{Error, Result};
use crate::prompting::{render_prompt, NewlinePolicy, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    KnnBow,
    KnnDense,
    Fixed,
}

/// In-prompt ordering of retrieved kNN examples. The nearest example sits
/// adjacent to the query slot by default; random selection keeps sampled
/// order regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrdering {
    #[default]
    NearestLast,
    NearestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub n_shots: usize,
    pub seed: u64,
    /// Neighbours retrieved before truncation to `n_shots`.
    pub k: usize,
    pub index_mode: IndexMode,
    pub approx_params: AnnParams,
    #[serde(default)]
    pub ordering: ExampleOrdering,
    /// Lowercase kNN search keys before matching.
    #[serde(default = "default_true")]
    pub lowercase: bool,
    /// Parallel embedding calls during index build.
    #[serde(default = "default_embed_width")]
    pub embed_width: usize,
}

fn default_true() -> bool {
    true
}

fn default_embed_width() -> usize {
    1
}

impl SelectionConfig {
    pub fn new(strategy: Strategy, n_shots: usize, seed: u64) -> Self {
        SelectionConfig {
            strategy,
            n_shots,
            seed,
            k: n_shots,
            index_mode: IndexMode::Exact,
            approx_params: AnnParams::default(),
            ordering: ExampleOrdering::default(),
            lowercase: true,
            embed_width: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            return Err(Error::Config("n_shots must be >= 1".into()));
        }
        if self.k < self.n_shots {
            return Err(Error::Config(format!(
                "k = {} must be >= n_shots = {}",
                self.k, self.n_shots
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub pool_kind: PoolKind,
}

/// The ordered n-shot examples chosen for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub examples: Vec<SegmentPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl ExampleSet {
    pub fn example_ids(&self) -> Vec<&str> {
        self.examples.iter().map(|p| p.id.as_str()).collect()
    }
}

/// Draw `n_shots` distinct pairs without replacement. The draw is fully
/// determined by (seed, pool order, n_shots).
pub fn select_random(pool: &Pool, cfg: &SelectionConfig) -> Result<ExampleSet> {
    cfg.validate()?;
    if pool.len() < cfg.n_shots {
        return Err(Error::PoolTooSmall {
            available: pool.len(),
            requested: cfg.n_shots,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), cfg.n_shots);
    let examples: Vec<SegmentPair> = picks.iter().map(|i| pool.get(i).clone()).collect();
    Ok(ExampleSet {
        examples,
        distances: None,
        provenance: Provenance {
            strategy: Strategy::Random,
            seed: Some(cfg.seed),
            pool_kind: pool.kind,
        },
    })
}

/// Build an index over the source side of every pool pair. Dense space
/// requires an embedder; embedding failures carry the offending pair id.
pub fn build_index(
    pool: &Pool,
    space: IndexSpace,
    embedder: Option<&dyn EmbeddingProvider>,
    cfg: &SelectionConfig,
) -> Result<VectorIndex> {
    cfg.validate()?;
    let ids: Vec<String> = pool.pairs().iter().map(|p| p.id.clone()).collect();
    let fingerprint = pool.fingerprint();
    let ann = match cfg.index_mode {
        IndexMode::Exact => None,
        IndexMode::Approximate => Some(cfg.approx_params),
    };
    match space {
        IndexSpace::BowCosine => {
            let mut vocab = Vocabulary::new();
            let mut vectors = Vec::with_capacity(pool.len());
            for pair in pool.pairs() {
                let v = BowVector::from_text(&pair.source_text, &mut vocab, cfg.lowercase);
                if v.is_empty() {
                    return Err(Error::Embedding {
                        id: pair.id.clone(),
                        message: "source text produced no tokens".into(),
                    });
                }
                vectors.push(v);
            }
            let mut index = VectorIndex::from_bow(ids, vocab, vectors, fingerprint, ann)?;
            index.set_lowercase_keys(cfg.lowercase);
            Ok(index)
        }
        IndexSpace::DenseEuclidean => {
            let embedder = embedder.ok_or_else(|| {
                Error::Config("dense index requires an embedding provider".into())
            })?;
            let texts: Vec<&str> = pool.pairs().iter().map(|p| p.source_text.as_str()).collect();
            let vectors = embed_chunked(pool, embedder, &texts, cfg.embed_width)?;
            VectorIndex::from_dense(ids, vectors, fingerprint, ann)
        }
    }
}

const EMBED_CHUNK: usize = 64;

/// Embed pool sources in chunks with at most `width` embedding calls in
/// flight; vectors are reassembled in pool order, so the result is identical
/// to serial execution. Failures carry the id of the chunk's first pair.
fn embed_chunked(
    pool: &Pool,
    embedder: &dyn EmbeddingProvider,
    texts: &[&str],
    width: usize,
) -> Result<Vec<Vec<f32>>> {
    type ChunkSlot = std::sync::Mutex<Option<Result<Vec<Vec<f32>>>>>;
    let starts: Vec<usize> = (0..texts.len()).step_by(EMBED_CHUNK).collect();
    let slots: Vec<ChunkSlot> = starts.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let width = width.max(1).min(starts.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..width {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if slot >= starts.len() {
                    break;
                }
                let start = starts[slot];
                let chunk = &texts[start..(start + EMBED_CHUNK).min(texts.len())];
                let result = embedder.embed(chunk).map_err(|e| match e {
                    Error::EmptyInput(_) | Error::Embedding { .. } | Error::Backend { .. } => {
                        Error::Embedding {
                            id: pool.get(start).id.clone(),
                            message: format!("batch starting here failed: {e}"),
                        }
                    }
                    other => other,
                });
                *slots[slot].lock().unwrap() = Some(result);
            });
        }
    });

    let mut vectors = Vec::with_capacity(texts.len());
    for slot in slots {
        vectors.extend(slot.into_inner().unwrap().expect("worker filled every slot")?);
    }
    Ok(vectors)
}

/// Query the index for the `k` nearest pool pairs, then order per the
/// configured policy and truncate to `n_shots`.
pub fn knn_query(
    index: &VectorIndex,
    pool: &Pool,
    query_text: &str,
    embedder: Option<&dyn EmbeddingProvider>,
    cfg: &SelectionConfig,
) -> Result<ExampleSet> {
    cfg.validate()?;
    if query_text.trim().is_empty() {
        return Err(Error::EmptyInput("kNN query text is empty".into()));
    }
    let pool_fp = pool.fingerprint();
    if index.fingerprint() != pool_fp {
        return Err(Error::FingerprintMismatch {
            index: index.fingerprint().to_string(),
            pool: pool_fp,
        });
    }
    if cfg.k > pool.len() {
        return Err(Error::Config(format!(
            "k = {} exceeds pool size {}",
            cfg.k,
            pool.len()
        )));
    }

    let query = match index.space() {
        IndexSpace::BowCosine => {
            let vocab = index.vocabulary().expect("sparse index has a vocabulary");
            // Normalize the query the way the index keys were normalized,
            // not the way the current config says.
            QueryVector::Sparse(BowVector::from_query(
                query_text,
                vocab,
                index.lowercase_keys(),
            ))
        }
        IndexSpace::DenseEuclidean => {
            let embedder = embedder.ok_or_else(|| {
                Error::Config("dense kNN query requires an embedding provider".into())
            })?;
            let mut vs = embedder.embed(&[query_text])?;
            QueryVector::Dense(vs.swap_remove(0))
        }
    };

    // Nearest-first candidates, truncated to the n_shots nearest, then
    // arranged per the ordering policy.
    let hits = index.search(&query, cfg.k)?;
    let mut nearest: Vec<(usize, f64)> = hits.into_iter().take(cfg.n_shots).collect();
    if cfg.ordering == ExampleOrdering::NearestLast {
        nearest.reverse();
    }
    let examples: Vec<SegmentPair> = nearest.iter().map(|&(i, _)| pool.get(i).clone()).collect();
    let distances: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
    let strategy = match index.space() {
        IndexSpace::BowCosine => Strategy::KnnBow,
        IndexSpace::DenseEuclidean => Strategy::KnnDense,
    };
    Ok(ExampleSet {
        examples,
        distances: Some(distances),
        provenance: Provenance {
            strategy,
            seed: None,
            pool_kind: pool.kind,
        },
    })
}

/// Whether held-out log-probabilities are recorded as raw sums or divided by
/// the continuation's token count before summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthNormalization {
    #[default]
    RawSum,
    PerToken,
}

/// Rank candidate prompts by the total log-probability they give a held-out
/// set: for each candidate `c`, sum over held-out pairs `h` of
/// `log P(target(h) | render(template, [c], source(h)))`. The first element
/// of the ranking is the fixed prompt.
pub fn select_fixed_ml(
    candidates: &Pool,
    heldout: &Pool,
    backend: &dyn TextBackend,
    template: &PromptTemplate,
) -> Result<Vec<(String, f64)>> {
    select_fixed_ml_with(candidates, heldout, backend, template, LengthNormalization::RawSum)
}

/// `select_fixed_ml` with an optional per-token normalization of each
/// held-out log-probability (token counts from the built-in word tokenizer).
pub fn select_fixed_ml_with(
    candidates: &Pool,
    heldout: &Pool,
    backend: &dyn TextBackend,
    template: &PromptTemplate,
    normalization: LengthNormalization,
) -> Result<Vec<(String, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate pool is empty".into()));
    }
    if heldout.is_empty() {
        return Err(Error::EmptyInput("held-out pool is empty".into()));
    }
    if !backend.supports_scoring() {
        return Err(Error::Unsupported {
            operation: "scoring".into(),
        });
    }
    let total_pairs = candidates.len() * heldout.len();
    let mut completed = 0usize;
    let mut totals: Vec<(String, f64)> = Vec::with_capacity(candidates.len());
    for candidate in candidates.pairs() {
        let mut total = 0.0f64;
        for held in heldout.pairs() {
            let prompt = render_prompt(
                template,
                std::slice::from_ref(candidate),
                &held.source_text,
                NewlinePolicy::SpaceJoin,
            )?;
            let resp = backend
                .score(&ScoreRequest {
                    context: prompt.text,
                    continuation: held.target_text.clone(),
                })
                .map_err(|e| Error::ScoringAborted {
                    completed,
                    total: total_pairs,
                    message: e.to_string(),
                })?;
            completed += 1;
            total += match normalization {
                LengthNormalization::RawSum => resp.log_prob,
                LengthNormalization::PerToken => {
                    let tokens = crate::text::count_tokens(&held.target_text).max(1);
                    resp.log_prob / tokens as f64
                }
            };
        }
        totals.push((candidate.id.clone(), total));
    }
    totals.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::corpus::{LangPair, Pool, PoolKind, SegmentPair};

    fn pool_of(words: &[(&str, &str)]) -> Pool {
        let pairs = words
            .iter()
            .enumerate()
            .map(|(i, (s, t))| SegmentPair {
                id: format!("p{i:03}"),
                source_text: s.to_string(),
                target_text: t.to_string(),
                granularity: crate::corpus::Granularity::Sentence,
                target_original: false,
                doc_id: None,
                genre: None,
            })
            .collect();
        Pool::new(PoolKind::Custom, LangPair::new("English", "German"), pairs).unwrap()
    }

    #[test]
    fn random_exhaustive_draw() {
        let pool = pool_of(&[
            ("a", "1"),
            ("b", "2"),
            ("c", "3"),
            ("d", "4"),
            ("e", "5"),
        ]);
        let cfg = SelectionConfig::new(Strategy::Random, 5, 42);
        let set = select_random(&pool, &cfg).unwrap();
        assert_eq!(set.examples.len(), 5);
        let mut ids = set.example_ids();
        ids.sort();
        assert_eq!(ids, vec!["p000", "p001", "p002", "p003", "p004"]);
    }

    #[test]
    fn random_same_seed_identical() {
        let pool = pool_of(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4"), ("e", "5")]);
        let cfg = SelectionConfig::new(Strategy::Random, 3, 7);
        assert_eq!(
            select_random(&pool, &cfg).unwrap(),
            select_random(&pool, &cfg).unwrap()
        );
    }

    #[test]
    fn random_different_seeds_diverge_on_large_pool() {
        let pairs: Vec<(String, String)> = (0..1000)
            .map(|i| (format!("source {i}"), format!("target {i}")))
            .collect();
        let refs: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(s, t)| (s.as_str(), t.as_str()))
            .collect();
        let pool = pool_of(&refs);
        let a = select_random(&pool, &SelectionConfig::new(Strategy::Random, 5, 1)).unwrap();
        let b = select_random(&pool, &SelectionConfig::new(Strategy::Random, 5, 2)).unwrap();
        assert_ne!(a.example_ids(), b.example_ids());
    }

    #[test]
    fn random_pool_too_small() {
        let pool = pool_of(&[("a", "1")]);
        let cfg = SelectionConfig::new(Strategy::Random, 2, 7);
        assert!(matches!(
            select_random(&pool, &cfg),
            Err(Error::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn knn_self_match_first_with_distance_zero() {
        let pool = pool_of(&[
            ("the cat sat", "x"),
            ("dogs bark loudly", "y"),
            ("birds fly south", "z"),
        ]);
        let mut cfg = SelectionConfig::new(Strategy::KnnBow, 1, 0);
        cfg.k = 3;
        cfg.ordering = ExampleOrdering::NearestFirst;
        let index = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap();
        let set = knn_query(&index, &pool, "the cat sat", None, &cfg).unwrap();
        assert_eq!(set.examples[0].id, "p000");
        assert_eq!(set.distances.as_ref().unwrap()[0], 0.0);
    }

    #[test]
    fn knn_nearest_last_ordering() {
        let pool = pool_of(&[
            ("alpha beta", "x"),
            ("alpha beta gamma", "y"),
            ("unrelated words here", "z"),
        ]);
        let mut cfg = SelectionConfig::new(Strategy::KnnBow, 2, 0);
        cfg.k = 3;
        let index = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap();
        let set = knn_query(&index, &pool, "alpha beta", None, &cfg).unwrap();
        // Nearest example is adjacent to the query slot (last).
        assert_eq!(set.examples.last().unwrap().id, "p000");
        let d = set.distances.unwrap();
        assert!(d[0] >= d[1]);
    }

    #[test]
    fn knn_k_equals_pool_size_returns_all_sorted() {
        let pool = pool_of(&[
            ("one two", "x"),
            ("one three", "y"),
            ("four five", "z"),
        ]);
        let mut cfg = SelectionConfig::new(Strategy::KnnBow, 3, 0);
        cfg.k = 3;
        cfg.ordering = ExampleOrdering::NearestFirst;
        let index = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap();
        let set = knn_query(&index, &pool, "one two", None, &cfg).unwrap();
        assert_eq!(set.examples.len(), 3);
        let d = set.distances.unwrap();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn parallel_embedding_matches_serial() {
        let pairs: Vec<(String, String)> = (0..150)
            .map(|i| (format!("text number {i} with words"), format!("t{i}")))
            .collect();
        let refs: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(s, t)| (s.as_str(), t.as_str()))
            .collect();
        let pool = pool_of(&refs);
        let embedder = HashEmbedder::default();
        let serial = SelectionConfig::new(Strategy::KnnDense, 2, 0);
        let mut parallel = serial.clone();
        parallel.embed_width = 4;
        let a = build_index(&pool, IndexSpace::DenseEuclidean, Some(&embedder), &serial).unwrap();
        let b = build_index(&pool, IndexSpace::DenseEuclidean, Some(&embedder), &parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn knn_empty_query_errors() {
        let pool = pool_of(&[("a b", "x"), ("c d", "y")]);
        let cfg = SelectionConfig::new(Strategy::KnnBow, 1, 0);
        let index = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap();
        assert!(knn_query(&index, &pool, "  ", None, &cfg).is_err());
    }

    #[test]
    fn query_normalization_follows_index_not_config() {
        // Case-sensitive index: the query must be normalized the way the
        // keys were, even if the active config disagrees.
        let pool = pool_of(&[("CASED Words", "x"), ("cased words", "y")]);
        let mut build_cfg = SelectionConfig::new(Strategy::KnnBow, 1, 0);
        build_cfg.lowercase = false;
        let index = build_index(&pool, IndexSpace::BowCosine, None, &build_cfg).unwrap();
        let mut query_cfg = build_cfg.clone();
        query_cfg.lowercase = true;
        let set = knn_query(&index, &pool, "CASED Words", None, &query_cfg).unwrap();
        assert_eq!(set.examples[0].id, "p000");
        assert_eq!(set.distances.unwrap()[0], 0.0);
    }

    #[test]
    fn untokenizable_source_fails_with_pair_id() {
        let pool = pool_of(&[("real words", "x"), ("?!…", "y")]);
        let cfg = SelectionConfig::new(Strategy::KnnBow, 1, 0);
        let err = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap_err();
        match err {
            Error::Embedding { id, .. } => assert_eq!(id, "p001"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn fingerprint_mismatch_rejected() {
        let pool = pool_of(&[("a b", "x"), ("c d", "y")]);
        let other = pool_of(&[("a b", "x"), ("c d", "changed")]);
        let cfg = SelectionConfig::new(Strategy::KnnBow, 1, 0);
        let index = build_index(&pool, IndexSpace::BowCosine, None, &cfg).unwrap();
        assert!(matches!(
            knn_query(&index, &other, "a b", None, &cfg),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn fixed_ml_ranking_argmax() {
        let candidates = pool_of(&[("cand one", "cand eins"), ("cand two", "cand zwei")]);
        let heldout = pool_of(&[("held src", "held tgt")]);
        let template = PromptTemplate::new("English", "German").unwrap();
        let mut mock = MockBackend::new();
        for (cand, lp) in candidates.pairs().iter().zip([-10.0, -12.0]) {
            let prompt = render_prompt(
                &template,
                std::slice::from_ref(cand),
                "held src",
                NewlinePolicy::SpaceJoin,
            )
            .unwrap();
            mock.insert_score(prompt.text, "held tgt", lp);
        }
        let ranking = select_fixed_ml(&candidates, &heldout, &mock, &template).unwrap();
        assert_eq!(ranking[0], ("p000".to_string(), -10.0));
        assert_eq!(ranking[1], ("p001".to_string(), -12.0));
    }

    #[test]
    fn fixed_ml_single_candidate() {
        let candidates = pool_of(&[("only", "einzig")]);
        let heldout = pool_of(&[("h", "t")]);
        let template = PromptTemplate::new("English", "German").unwrap();
        let mut mock = MockBackend::new();
        let prompt = render_prompt(
            &template,
            std::slice::from_ref(&candidates.get(0).clone()),
            "h",
            NewlinePolicy::SpaceJoin,
        )
        .unwrap();
        mock.insert_score(prompt.text, "t", -1.0);
        let ranking = select_fixed_ml(&candidates, &heldout, &mock, &template).unwrap();
        assert_eq!(ranking.len(), 1);
        assert_eq!(ranking[0].0, "p000");
    }

    #[test]
    fn fixed_ml_totals_hand_summed() {
        // 3 candidates x 2 held-out pairs with a table of mock log-probs.
        let candidates = pool_of(&[("c0", "k0"), ("c1", "k1"), ("c2", "k2")]);
        let heldout = pool_of(&[("h0", "t0"), ("h1", "t1")]);
        let template = PromptTemplate::new("English", "German").unwrap();
        let table = [
            [-1.0, -2.0], // c0: total -3.0
            [-0.5, -0.25], // c1: total -0.75
            [-4.0, -1.0], // c2: total -5.0
        ];
        let mut mock = MockBackend::new();
        for (ci, cand) in candidates.pairs().iter().enumerate() {
            for (hi, held) in heldout.pairs().iter().enumerate() {
                let prompt = render_prompt(
                    &template,
                    std::slice::from_ref(cand),
                    &held.source_text,
                    NewlinePolicy::SpaceJoin,
                )
                .unwrap();
                mock.insert_score(prompt.text, held.target_text.clone(), table[ci][hi]);
            }
        }
        let ranking = select_fixed_ml(&candidates, &heldout, &mock, &template).unwrap();
        assert_eq!(
            ranking,
            vec![
                ("p001".to_string(), -0.75),
                ("p000".to_string(), -3.0),
                ("p002".to_string(), -5.0),
            ]
        );
    }

    #[test]
    fn fixed_ml_per_token_normalization() {
        // Two held-out pairs with 1-token and 4-token targets: the raw and
        // normalized rankings disagree by construction.
        let candidates = pool_of(&[("c0", "k0"), ("c1", "k1")]);
        let heldout = pool_of(&[("h0", "kurz"), ("h1", "vier woerter lange zeile")]);
        let template = PromptTemplate::new("English", "German").unwrap();
        let mut mock = MockBackend::new();
        // c0: -1 on the short pair, -8 on the long one (raw -9, norm -3).
        // c1: -4 on both (raw -8, norm -5).
        let table = [[-1.0, -8.0], [-4.0, -4.0]];
        for (ci, cand) in candidates.pairs().iter().enumerate() {
            for (hi, held) in heldout.pairs().iter().enumerate() {
                let prompt = render_prompt(
                    &template,
                    std::slice::from_ref(cand),
                    &held.source_text,
                    NewlinePolicy::SpaceJoin,
                )
                .unwrap();
                mock.insert_score(prompt.text, held.target_text.clone(), table[ci][hi]);
            }
        }
        let raw = select_fixed_ml(&candidates, &heldout, &mock, &template).unwrap();
        assert_eq!(raw[0].0, "p001"); // -8 beats -9
        let normalized = select_fixed_ml_with(
            &candidates,
            &heldout,
            &mock,
            &template,
            LengthNormalization::PerToken,
        )
        .unwrap();
        assert_eq!(normalized[0].0, "p000"); // -1/1 + -8/4 = -3 beats -5
        assert_eq!(normalized[0].1, -3.0);
    }

    #[test]
    fn fixed_ml_backend_error_aborts() {
        let candidates = pool_of(&[("c0", "k0")]);
        let heldout = pool_of(&[("h0", "t0")]);
        let template = PromptTemplate::new("English", "German").unwrap();
        let mock = MockBackend::new(); // no score entries
        let err = select_fixed_ml(&candidates, &heldout, &mock, &template).unwrap_err();
        assert!(matches!(err, Error::ScoringAborted { completed: 0, .. }));
    }
}
