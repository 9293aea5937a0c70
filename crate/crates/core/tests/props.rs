//! Property tests for the invariants that hold on arbitrary inputs rather
//! than hand-picked fixtures.

use proptest::prelude::*;

use promptmt::corpus::{filter_target_original, Granularity, LangPair, Pool, PoolKind, SegmentPair};
use promptmt::evaluation::{corpus_score, diff_histogram, select_median_run, ScoredRun};
use promptmt::overlap::{
    build_index_from_docs, Classification, DefaultTokenizer, OverlapConfig, OverlapTokenizer,
};
use promptmt::prompting::{parse_completion, render_prompt, NewlinePolicy, PromptTemplate};
use promptmt::selection::{bow_distance, BowVector};
use promptmt::stats::{perm_both_test, SignificanceConfig};

fn bow(counts: Vec<(u32, u32)>) -> BowVector {
    BowVector::from_counts(counts.into_iter().collect())
}

fn nonempty_counts() -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((0u32..30, 1u32..20), 1..12)
}

proptest! {
    #[test]
    fn bow_distance_symmetric_and_in_range(a in nonempty_counts(), b in nonempty_counts()) {
        let (va, vb) = (bow(a), bow(b));
        let d_ab = bow_distance(&va, &vb).unwrap();
        let d_ba = bow_distance(&vb, &va).unwrap();
        prop_assert_eq!(d_ab, d_ba);
        prop_assert!((0.0..=1.0).contains(&d_ab));
    }

    #[test]
    fn bow_distance_self_is_zero(a in nonempty_counts()) {
        let v = bow(a);
        prop_assert_eq!(bow_distance(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn bow_distance_scale_invariant(a in nonempty_counts(), b in nonempty_counts(), scale in 2u32..6) {
        let (va, vb) = (bow(a.clone()), bow(b));
        let scaled = bow(a.into_iter().map(|(t, c)| (t, c * scale)).collect());
        let d = bow_distance(&va, &vb).unwrap();
        let d_scaled = bow_distance(&scaled, &vb).unwrap();
        prop_assert!((d - d_scaled).abs() < 1e-9);
    }

    #[test]
    fn parse_completion_idempotent(raw in ".{0,80}") {
        let once = parse_completion(&raw);
        prop_assert_eq!(parse_completion(once), once);
        prop_assert!(!once.contains('\n'));
    }

    #[test]
    fn render_is_injective_in_source(
        src_a in "[a-z]{1,20}",
        src_b in "[a-z]{1,20}",
        n_examples in 0usize..4,
    ) {
        prop_assume!(src_a != src_b);
        let template = PromptTemplate::new("English", "German").unwrap();
        let examples: Vec<SegmentPair> = (0..n_examples)
            .map(|i| SegmentPair {
                id: format!("e{i}"),
                source_text: format!("src {i}"),
                target_text: format!("tgt {i}"),
                granularity: Granularity::Sentence,
                target_original: false,
                doc_id: None,
                genre: None,
            })
            .collect();
        let ra = render_prompt(&template, &examples, &src_a, NewlinePolicy::SpaceJoin).unwrap();
        let rb = render_prompt(&template, &examples, &src_b, NewlinePolicy::SpaceJoin).unwrap();
        prop_assert_ne!(ra.text, rb.text);
    }

    #[test]
    fn rendered_prompt_lines_alternate_labels(n_examples in 0usize..6) {
        let template = PromptTemplate::new("English", "German").unwrap();
        let examples: Vec<SegmentPair> = (0..n_examples)
            .map(|i| SegmentPair {
                id: format!("e{i}"),
                source_text: format!("src {i}"),
                target_text: format!("tgt {i}"),
                granularity: Granularity::Sentence,
                target_original: false,
                doc_id: None,
                genre: None,
            })
            .collect();
        let rendered = render_prompt(&template, &examples, "query", NewlinePolicy::SpaceJoin).unwrap();
        prop_assert!(rendered.text.ends_with("German: "));
        let body = rendered.text.strip_suffix("German: ").unwrap();
        let lines: Vec<&str> = body.split_terminator('\n').collect();
        prop_assert_eq!(lines.len(), 2 * n_examples + 1);
        for (i, line) in lines.iter().enumerate() {
            if i % 2 == 0 {
                prop_assert!(line.starts_with("English: "));
            } else {
                prop_assert!(line.starts_with("German: "));
            }
        }
    }

    #[test]
    fn filter_target_original_idempotent(flags in prop::collection::vec(any::<bool>(), 0..20)) {
        let pairs: Vec<SegmentPair> = flags
            .iter()
            .enumerate()
            .map(|(i, &flag)| SegmentPair {
                id: format!("p{i}"),
                source_text: format!("s{i}"),
                target_text: format!("t{i}"),
                granularity: Granularity::Sentence,
                target_original: flag,
                doc_id: None,
                genre: None,
            })
            .collect();
        let pool = Pool::new(PoolKind::WmtDev, LangPair::new("English", "German"), pairs).unwrap();
        let once = filter_target_original(&pool);
        let twice = filter_target_original(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.len(), flags.iter().filter(|&&f| f).count());
    }

    #[test]
    fn corpus_score_permutation_invariant(scores in prop::collection::vec(-50.0f64..150.0, 1..40), seed in any::<u64>()) {
        let mut run = ScoredRun::new("r", "s", None, vec!["o".into(); scores.len()]);
        run.metric_scores.insert("m".into(), scores.clone());
        let base = corpus_score(&run, "m").unwrap();

        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = scores;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut run2 = ScoredRun::new("r", "s", None, vec!["o".into(); shuffled.len()]);
        run2.metric_scores.insert("m".into(), shuffled);
        let permuted = corpus_score(&run2, "m").unwrap();
        prop_assert!((base - permuted).abs() < 1e-9);
    }

    #[test]
    fn median_returns_member_with_true_median_score(
        scores in prop::collection::vec(0.0f64..100.0, 5..=5)
    ) {
        let runs: Vec<ScoredRun> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut run = ScoredRun::new(format!("r{i}"), "s", Some(i as u64), vec!["o".into()]);
                run.metric_scores.insert("m".into(), vec![s]);
                run
            })
            .collect();
        let median = select_median_run(&runs, "m").unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let true_median = sorted[2];
        prop_assert_eq!(corpus_score(median, "m").unwrap(), true_median);
        prop_assert!(runs.iter().any(|r| r.run_id == median.run_id));
    }

    #[test]
    fn histogram_total_equals_segment_count(
        diffs in prop::collection::vec(-30.0f64..30.0, 1..200),
        width in prop::sample::select(vec![0.5f64, 1.0, 2.0]),
    ) {
        let a_scores: Vec<f64> = diffs.clone();
        let b_scores = vec![0.0; diffs.len()];
        let mut a = ScoredRun::new("a", "a", None, vec!["o".into(); diffs.len()]);
        a.metric_scores.insert("m".into(), a_scores);
        let mut b = ScoredRun::new("b", "b", None, vec!["o".into(); diffs.len()]);
        b.metric_scores.insert("m".into(), b_scores);
        let hist = diff_histogram(&a, &b, "m", width).unwrap();
        prop_assert_eq!(hist.total, diffs.len());
        prop_assert_eq!(hist.bins.values().sum::<usize>(), diffs.len());
        let hand_count = diffs.iter().filter(|d| d.abs() > width).count();
        prop_assert_eq!(hist.exceeding_count, hand_count);
    }

    #[test]
    fn perm_test_p_never_zero_and_seeded_deterministic(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30),
        seed in any::<u64>(),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let cfg = SignificanceConfig {
            num_permutations: 300,
            seed,
            ..SignificanceConfig::default()
        };
        let r1 = perm_both_test(&a, &b, &cfg).unwrap();
        let r2 = perm_both_test(&a, &b, &cfg).unwrap();
        prop_assert_eq!(&r1, &r2);
        prop_assert!(r1.p_value > 0.0);
        prop_assert!(r1.p_value <= 1.0);
    }

    #[test]
    fn overlap_classifier_agrees_with_substring_oracle(
        docs in prop::collection::vec(prop::collection::vec(0u8..6, 1..25), 1..8),
        segment in prop::collection::vec(0u8..6, 1..25),
    ) {
        let word = |t: &u8| format!("w{t}");
        let doc_strings: Vec<String> = docs
            .iter()
            .map(|d| d.iter().map(word).collect::<Vec<_>>().join(" "))
            .collect();
        let seg_string: String = segment.iter().map(word).collect::<Vec<_>>().join(" ");

        let n = 3;
        let cfg = OverlapConfig { n, ..OverlapConfig::default() };
        let tok = DefaultTokenizer;
        let index = build_index_from_docs(doc_strings.iter(), &cfg, &tok).unwrap();
        let got = index.classify_segment(&seg_string, &tok).unwrap();

        // Brute-force token-level oracle.
        let doc_tokens: Vec<Vec<String>> = doc_strings.iter().map(|d| tok.tokenize(d).unwrap()).collect();
        let seg_tokens = tok.tokenize(&seg_string).unwrap();
        let contains = |needle: &[String]| {
            doc_tokens.iter().any(|doc| {
                doc.len() >= needle.len() && doc.windows(needle.len()).any(|w| w == needle)
            })
        };
        let want = if seg_tokens.len() >= n {
            seg_tokens.windows(n).any(&contains)
        } else {
            contains(&seg_tokens)
        };
        prop_assert_eq!(got == Classification::Overlapping, want);
    }

    #[test]
    fn overlap_monotone_under_corpus_growth(
        base in prop::collection::vec(prop::collection::vec(0u8..5, 1..20), 1..5),
        extra in prop::collection::vec(prop::collection::vec(0u8..5, 1..20), 1..5),
        segment in prop::collection::vec(0u8..5, 1..20),
    ) {
        let word = |t: &u8| format!("w{t}");
        let to_doc = |d: &Vec<u8>| d.iter().map(word).collect::<Vec<_>>().join(" ");
        let base_docs: Vec<String> = base.iter().map(to_doc).collect();
        let mut grown = base_docs.clone();
        grown.extend(extra.iter().map(to_doc));
        let seg_string: String = segment.iter().map(word).collect::<Vec<_>>().join(" ");

        let cfg = OverlapConfig { n: 3, ..OverlapConfig::default() };
        let tok = DefaultTokenizer;
        let small = build_index_from_docs(base_docs.iter(), &cfg, &tok).unwrap();
        let large = build_index_from_docs(grown.iter(), &cfg, &tok).unwrap();
        let before = small.classify_segment(&seg_string, &tok).unwrap();
        let after = large.classify_segment(&seg_string, &tok).unwrap();
        if before == Classification::Overlapping {
            prop_assert_eq!(after, Classification::Overlapping);
        }
    }
}
