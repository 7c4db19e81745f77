#![allow(dead_code)]

use dp_decode::rng;
use rand::seq::IndexedRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const CHI_SQUARE_SIGNIFICANCE: f64 = 1e-3;

#[derive(Debug)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub degrees_of_freedom: usize,
}

impl ChiSquareOutcome {
    pub fn passed(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Pearson goodness of fit of `observed` counts against `probabilities`.
/// Cells with expected count below 5 are pooled into one bin. Returns
/// `None` when a zero-probability cell was observed at all.
pub fn chi_square(observed: &[u64], probabilities: &[f64], significance: f64) -> Option<ChiSquareOutcome> {
    assert_eq!(observed.len(), probabilities.len());
    let n: u64 = observed.iter().sum();
    let n = n as f64;

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        if p == 0.0 {
            if o > 0 {
                return None;
            }
            continue;
        }
        let e = n * p;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            bins.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        if pooled.1 >= 5.0 || bins.is_empty() {
            bins.push(pooled);
        } else {
            bins.sort_by(|a, b| a.1.total_cmp(&b.1));
            bins[0].0 += pooled.0;
            bins[0].1 += pooled.1;
        }
    }
    if bins.len() < 2 {
        // A single bin carries no information: all mass in one outcome.
        return Some(ChiSquareOutcome {
            statistic: 0.0,
            critical: 0.0,
            degrees_of_freedom: 0,
        });
    }
    let statistic = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = bins.len() - 1;
    let critical = ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - significance);
    Some(ChiSquareOutcome {
        statistic,
        critical,
        degrees_of_freedom: df,
    })
}

/// Deterministic templated English-like corpus. Neighbouring words are
/// strongly correlated, so a window model beats uniform by a wide margin.
pub fn synthetic_corpus(lines: usize, seed: u64) -> String {
    const SUBJECTS: &[&str] = &[
        "the cat", "the dog", "a small bird", "my neighbor", "the old man", "a young child",
        "the teacher", "our cook", "the farmer", "a tired student",
    ];
    const VERBS: &[&str] = &["sees", "likes", "chases", "feeds", "finds", "paints", "watches", "calls"];
    const OBJECTS: &[&str] = &[
        "the red ball", "a green apple", "the blue car", "an old book", "the big tree", "a warm coat",
        "the quiet lake", "a broken chair",
    ];
    const PLACES: &[&str] = &["in the garden", "at the park", "near the river", "by the station", "on the hill"];
    const TIMES: &[&str] = &["today", "every morning", "at night", "after lunch", "on sunday"];

    let mut r = rng::seeded(seed);
    let mut out = String::new();
    for _ in 0..lines {
        let mut parts = vec![*SUBJECTS.choose(&mut r).unwrap(), *VERBS.choose(&mut r).unwrap(), *OBJECTS.choose(&mut r).unwrap()];
        if r.random_bool(0.7) {
            parts.push(PLACES.choose(&mut r).unwrap());
        }
        if r.random_bool(0.5) {
            parts.push(TIMES.choose(&mut r).unwrap());
        }
        out.push_str(&parts.join(" "));
        out.push('\n');
    }
    out
}
