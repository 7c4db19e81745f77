mod common;

use dp_decode::corpus::{build_vocab_and_tokenize, mask_corpus, Corpus, MaskedExample};
use dp_decode::mlm::{train, NGramMlm};
use dp_decode::rng;
use statrs::distribution::{Binomial, DiscreteCDF};

#[test]
fn fifteen_percent_masking_lands_in_binomial_window() {
    // 10000 tokens, one line of 10 per example.
    let text = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9\n".repeat(1000);
    let corpus = build_vocab_and_tokenize(&text).unwrap();
    assert_eq!(corpus.token_count(), 10_000);

    let binom = Binomial::new(0.15, 10_000).unwrap();
    let window_mass = binom.cdf(1700) - binom.cdf(1299);
    assert!(window_mass > 0.999, "{window_mass}");

    for seed in 0..20 {
        let masked = mask_corpus(&corpus, 0.15, &mut rng::seeded(seed)).unwrap();
        let total: usize = masked.iter().map(MaskedExample::mask_count).sum();
        assert!((1300..=1700).contains(&total), "seed {seed}: {total}");
        for (ex, original) in masked.iter().zip(&corpus.examples) {
            let held_out: Vec<usize> = ex.masked_positions.iter().map(|&p| original[p]).collect();
            assert_eq!(ex.originals.as_ref(), Some(&held_out));
        }
    }
}

#[test]
fn training_is_deterministic_and_serializes_identically() {
    let text = common::synthetic_corpus(300, 9);
    let a = train(&build_vocab_and_tokenize(&text).unwrap(), 2, 0.1).unwrap();
    let b = train(&build_vocab_and_tokenize(&text).unwrap(), 2, 0.1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(NGramMlm::from_text(&a.to_text()).unwrap(), a);
}

#[test]
fn serialized_lines_are_sorted() {
    let text = common::synthetic_corpus(100, 1);
    let model = train(&build_vocab_and_tokenize(&text).unwrap(), 1, 0.1).unwrap();
    let serialized = model.to_text();
    let rows: Vec<(Vec<usize>, Vec<usize>, usize)> = serialized
        .lines()
        .skip(1 + model.vocab().size())
        .map(|line| {
            let mut f = line.split('\t');
            let (l, r) = f.next().unwrap().split_once('|').unwrap();
            let ids = |s: &str| -> Vec<usize> {
                if s.is_empty() { vec![] } else { s.split(',').map(|x| x.parse().unwrap()).collect() }
            };
            (ids(l), ids(r), f.next().unwrap().parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn every_prediction_is_a_full_support_distribution() {
    let text = common::synthetic_corpus(500, 4);
    let corpus = build_vocab_and_tokenize(&text).unwrap();
    let model = train(&corpus, 1, 0.1).unwrap();
    let masked = mask_corpus(&corpus, 0.3, &mut rng::seeded(5)).unwrap();
    for ex in masked.iter().take(100) {
        let dists = model.predict_masked(ex).unwrap();
        assert_eq!(dists.len(), ex.mask_count());
        for d in dists {
            assert!((d.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.mass().iter().all(|&m| m > 0.0));
        }
    }
}

#[test]
fn fully_masked_example_predicts_uniform() {
    let corpus = build_vocab_and_tokenize(&common::synthetic_corpus(200, 2)).unwrap();
    let model = train(&corpus, 1, 0.1).unwrap();
    let ex = MaskedExample::with_positions(&corpus.examples[0][..3], &[0, 1, 2]).unwrap();
    let uniform = 1.0 / corpus.vocab.size() as f64;
    for d in model.predict_masked(&ex).unwrap() {
        assert!(d.mass().iter().all(|&m| (m - uniform).abs() < 1e-12));
    }
}

#[test]
fn memorized_example_gets_high_mass() {
    let mut text = common::synthetic_corpus(200, 3);
    let secret = "zebra quartz violet mango";
    for _ in 0..50 {
        text.push_str(secret);
        text.push('\n');
    }
    let corpus = build_vocab_and_tokenize(&text).unwrap();
    let model = train(&corpus, 1, 0.1).unwrap();
    let tokens = dp_decode::corpus::tokenize(&corpus.vocab, secret);
    for p in [1, 2] {
        let single = MaskedExample::with_positions(&tokens, &[p]).unwrap();
        let q = model.true_token_probabilities(&single).unwrap()[0];
        // 50 occurrences of this exact context, all followed by the true token.
        let expected = (50.0 + 0.1) / (50.0 + 0.1 * corpus.vocab.size() as f64);
        assert!((q - expected).abs() < 1e-12, "position {p}: {q}");
        assert!(q > 0.8);
    }
}

/// Repeating one example k times raises the model's probability of its
/// held-out tokens, strictly.
#[test]
fn duplication_increases_held_out_probability() {
    let base = common::synthetic_corpus(300, 8);
    let target = "the dog paints the quiet lake on sunday";
    let probability_with = |copies: usize| {
        let mut text = base.clone();
        for _ in 0..copies {
            text.push_str(target);
            text.push('\n');
        }
        let corpus = build_vocab_and_tokenize(&text).unwrap();
        let model = train(&corpus, 1, 0.1).unwrap();
        let tokens = dp_decode::corpus::tokenize(&corpus.vocab, target);
        (0..tokens.len())
            .map(|p| {
                let ex = MaskedExample::with_positions(&tokens, &[p]).unwrap();
                model.true_token_probabilities(&ex).unwrap()[0]
            })
            .collect::<Vec<f64>>()
    };
    let once = probability_with(1);
    let mut previous = once.clone();
    for k in [2, 4, 8] {
        let now = probability_with(k);
        for (p, (a, b)) in previous.iter().zip(&now).enumerate() {
            assert!(b > a, "k={k} position {p}: {b} <= {a}");
        }
        previous = now;
    }
}

/// Duplicating the entire corpus doubles every count. Normalized counts are
/// scale-invariant, so doubling alpha too reproduces the original
/// predictions; at fixed alpha the duplicate only sharpens them.
#[test]
fn duplicated_corpus_scales_counts() {
    let text = common::synthetic_corpus(300, 6);
    let single = build_vocab_and_tokenize(&text).unwrap();
    let doubled = build_vocab_and_tokenize(&format!("{text}{text}")).unwrap();
    assert_eq!(single.vocab, doubled.vocab);

    let m1 = train(&single, 1, 0.1).unwrap();
    let m2 = train(&doubled, 1, 0.2).unwrap();
    let masked = mask_corpus(&single, 0.15, &mut rng::seeded(1)).unwrap();
    for ex in masked.iter().take(200) {
        for position in &ex.masked_positions {
            let ctx = m1.context_of(ex, *position);
            for token in 0..single.vocab.size() {
                assert_eq!(m2.count(&ctx, token), 2 * m1.count(&ctx, token));
            }
        }
        let a = m1.predict_masked(ex).unwrap();
        let b = m2.predict_masked(ex).unwrap();
        for (da, db) in a.iter().zip(&b) {
            for (x, y) in da.mass().iter().zip(db.mass()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn order_larger_than_any_example_still_trains() {
    let corpus = build_vocab_and_tokenize("a b\nc d e").unwrap();
    let model = train(&corpus, 10, 0.1).unwrap();
    let ex = MaskedExample::with_positions(&corpus.examples[1], &[1]).unwrap();
    let d = &model.predict_masked(&ex).unwrap()[0];
    let argmax = d.mass().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(corpus.vocab.token(argmax), Some("d"));
}

#[test]
fn held_out_text_maps_to_model_vocabulary() {
    let train_corpus = build_vocab_and_tokenize("the cat sat").unwrap();
    let eval = Corpus::with_vocab(train_corpus.vocab.clone(), "the dog sat\n\n");
    assert_eq!(eval.examples.len(), 1);
    assert_eq!(eval.examples[0][1], dp_decode::corpus::UNK_ID);
}
