//! Randomized invariant checks over the public API: normalization, encoding,
//! corpus round-trips, metric symmetries, and rendering round-trips.

use headprune::corpus::{self, CorpusRecord, Split, Task};
use headprune::metrics;
use headprune::model::{Model, ModelConfig};
use headprune::prune::{ImportanceGrid, ScoreReduction, SourceSplit};
use headprune::report;
use headprune::tokenizer::{self, Vocabulary, PAD_ID};
use headprune::Graph;
use proptest::prelude::*;

fn finite_f64() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..5,
        cols in 1usize..8,
        raw in prop::collection::vec(-30.0f64..30.0, 1..40),
        mask_bits in prop::collection::vec(any::<bool>(), 8),
    ) {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows * cols {
            data.push(raw[i % raw.len()]);
        }
        let mut keep_one = mask_bits.clone();
        keep_one[0] = true;
        let mask: Vec<f64> = (0..cols)
            .map(|c| if keep_one[c % keep_one.len()] { 0.0 } else { -1e9 })
            .collect();
        let mut g = Graph::new();
        let x = g.constant(data, vec![rows, cols]).unwrap();
        let bare = g.softmax_rows(x, None).unwrap();
        let masked = g.softmax_rows(x, Some(&mask)).unwrap();
        for id in [bare, masked] {
            let out = g.data(id);
            for r in 0..rows {
                let total: f64 = out[r * cols..(r + 1) * cols].iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12, "row sums to {total}");
            }
        }
        let out = g.data(masked);
        for r in 0..rows {
            for c in 0..cols {
                if mask[c] != 0.0 {
                    prop_assert_eq!(out[r * cols + c], 0.0);
                }
            }
        }
    }

    #[test]
    fn tokenize_always_fills_max_len(
        sentence in "[a-z ]{0,60}",
        max_len in 2usize..32,
    ) {
        let vocab = Vocabulary::from_pieces(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "the", "lamp", "hums", "a", "b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        let (ids, mask) = tokenizer::tokenize(&sentence, &vocab, max_len).unwrap();
        prop_assert_eq!(ids.len(), max_len);
        prop_assert_eq!(mask.len(), max_len);
        // Real positions form a prefix; padding fills the rest.
        let n_real = mask.iter().take_while(|&&m| m).count();
        prop_assert!(n_real >= 2, "at least the two wrapper tokens");
        prop_assert!(mask[n_real..].iter().all(|&m| !m));
        prop_assert!(ids[n_real..].iter().all(|&id| id == PAD_ID));
        prop_assert!(ids[..n_real].iter().all(|&id| id != PAD_ID));
        prop_assert!(ids.iter().all(|&id| id < vocab.len()));
    }

    #[test]
    fn corpus_tsv_round_trips(
        n in 1usize..12,
        word in "[a-z]{1,8}",
        flags in prop::collection::vec(any::<(bool, bool, bool)>(), 12),
    ) {
        let records: Vec<CorpusRecord> = (0..n)
            .map(|i| {
                let (idiom, metaphor, train) = flags[i % flags.len()];
                CorpusRecord {
                    id: format!("case-{i}"),
                    expression: if i % 2 == 0 { word.clone() } else { String::new() },
                    sentence: format!("{word} number {i}"),
                    idiom,
                    metaphor: Some(metaphor),
                    split: if train { Split::Train } else { Split::Test },
                }
            })
            .collect();
        let text = corpus::render_tsv(&records).unwrap();
        let parsed = corpus::parse_tsv(&text).unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(corpus::render_tsv(&parsed).unwrap(), text);
    }

    #[test]
    fn balanced_subsets_are_balanced(
        n_pos in 1usize..20,
        n_neg in 1usize..20,
        seed in any::<u64>(),
    ) {
        let records: Vec<CorpusRecord> = (0..n_pos + n_neg)
            .map(|i| CorpusRecord {
                id: format!("r{i}"),
                expression: String::new(),
                sentence: format!("sentence {i}"),
                idiom: i < n_pos,
                metaphor: None,
                split: Split::Train,
            })
            .collect();
        let per_class = n_pos.min(n_neg);
        let subset = corpus::balanced_subset(&records, Task::Idiom, per_class * 2, seed).unwrap();
        prop_assert_eq!(subset.len(), per_class * 2);
        let pos = subset.iter().filter(|r| r.idiom).count();
        prop_assert_eq!(pos, per_class);
        let mut ids: Vec<&str> = subset.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), subset.len(), "no record drawn twice");
    }

    #[test]
    fn metric_symmetries_hold(
        pairs in prop::collection::vec(any::<(bool, bool)>(), 1..100),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let pred: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let gold: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let base = metrics::metrics(
            metrics::confusion(&pred, &gold).unwrap(),
            Task::Idiom,
        )
        .unwrap();

        // Permutation invariance.
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let pred2: Vec<bool> = idx.iter().map(|&i| pred[i]).collect();
        let gold2: Vec<bool> = idx.iter().map(|&i| gold[i]).collect();
        let permuted = metrics::metrics(
            metrics::confusion(&pred2, &gold2).unwrap(),
            Task::Idiom,
        )
        .unwrap();
        prop_assert_eq!(&base, &permuted);

        // Swapping the positive class leaves accuracy and macro averages.
        let flip = |v: &[bool]| -> Vec<bool> { v.iter().map(|&b| !b).collect() };
        let swapped = metrics::metrics(
            metrics::confusion(&flip(&pred), &flip(&gold)).unwrap(),
            Task::Idiom,
        )
        .unwrap();
        prop_assert_eq!(base.accuracy, swapped.accuracy);
        prop_assert_eq!(base.macro_precision, swapped.macro_precision);
        prop_assert_eq!(base.macro_recall, swapped.macro_recall);

        // Support-weighted recall is accuracy; F1 sits between its parts.
        prop_assert!((base.weighted_recall - base.accuracy).abs() < 1e-12);
        if base.precision + base.recall > 0.0 {
            let lo = base.precision.min(base.recall);
            let hi = base.precision.max(base.recall);
            prop_assert!(base.f1 >= lo - 1e-15 && base.f1 <= hi + 1e-15);
        }
    }

    #[test]
    fn grid_csv_round_trips_any_finite_scores(
        layers in 1usize..4,
        heads in 1usize..6,
        raw in prop::collection::vec(finite_f64(), 1..24),
    ) {
        let scores: Vec<Vec<f64>> = (0..layers)
            .map(|l| (0..heads).map(|h| raw[(l * heads + h) % raw.len()]).collect())
            .collect();
        let grid = ImportanceGrid {
            scores: scores.clone(),
            n_examples: 1,
            task: Task::Idiom,
            source_split: SourceSplit::Train,
            reduction: ScoreReduction::Mean,
        };
        let csv = report::grid_to_csv(&grid);
        let parsed = report::grid_scores_from_csv(&csv).unwrap();
        prop_assert_eq!(parsed.len(), layers);
        for (row, want) in parsed.iter().zip(&scores) {
            for (a, b) in row.iter().zip(want) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

proptest! {
    // Forward passes are slower; keep the case count modest.
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn padding_content_never_changes_the_logit(
        real in prop::collection::vec(4usize..10, 1..4),
        junk in prop::collection::vec(4usize..10, 6),
        seed in 0u64..50,
    ) {
        let config = ModelConfig {
            vocab_size: 10,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            max_len: 6,
            lstm_hidden: 3,
            lstm_layers: 1,
            dropout: 0.0,
        };
        let model = Model::init(config, seed).unwrap();
        let mut tokens = vec![2usize];
        tokens.extend(&real);
        tokens.push(3);
        let n_real = tokens.len();
        let mut mask = vec![true; n_real];
        let mut padded = tokens.clone();
        while padded.len() < 6 {
            padded.push(0);
            mask.push(false);
        }
        let baseline = model.predict(&padded, &mask).unwrap();
        // Replace pad slots with arbitrary vocabulary ids.
        let mut vandalized = padded.clone();
        for (i, slot) in vandalized.iter_mut().enumerate().skip(n_real) {
            *slot = junk[i % junk.len()];
        }
        let altered = model.predict(&vandalized, &mask).unwrap();
        prop_assert_eq!(baseline.logit.to_bits(), altered.logit.to_bits());
        prop_assert_eq!(baseline.probability.to_bits(), altered.probability.to_bits());
    }
}
