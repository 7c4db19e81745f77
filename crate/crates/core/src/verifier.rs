//! Brute-force check of the privacy bound on tiny instances.
//!
//! For two inputs that produce per-position distributions `a` and `b`, the
//! probability of an output sequence `y` is the product over positions of
//! the perturbed probabilities of `y_i`. The verifier enumerates every `y`
//! in `V^z`, takes the largest log-ratio between the two inputs, and
//! compares it against `z * ln((1 + (|V|-1)λ) / (1-λ))`.
//!
//! The bound is evaluated here from its literal formula rather than through
//! [`crate::accountant`], so the two can be checked against each other.

use rand::Rng;
use rand_distr::{Distribution as _, Exp1};
use thiserror::Error;

use crate::simplex::{Distribution, SimplexError};

pub const MAX_VOCAB: usize = 8;
pub const MAX_POSITIONS: usize = 4;
/// Slack allowed when comparing the enumerated maximum to the bound.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("instance |V|={vocab_size}, z={positions} exceeds the enumeration limit |V|<={MAX_VOCAB}, z<={MAX_POSITIONS}")]
    TooLarge { vocab_size: usize, positions: usize },
    #[error("lambda must lie in [0, 1), got {0}")]
    LambdaOutOfRange(f64),
    #[error("neighbor inputs need the same number of positions, got {a} and {b}")]
    PositionMismatch { a: usize, b: usize },
    #[error("all distributions must share one vocabulary size")]
    VocabularyMismatch,
    #[error("vocabulary size must be at least 2, got {0}")]
    VocabularyTooSmall(usize),
    #[error("output sequence has {got} tokens for {expected} positions")]
    SequenceLength { expected: usize, got: usize },
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Per-position model outputs for two inputs with the same mask count.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPair {
    distributions_a: Vec<Distribution>,
    distributions_b: Vec<Distribution>,
    lambda: f64,
}

impl NeighborPair {
    pub fn new(
        distributions_a: Vec<Distribution>,
        distributions_b: Vec<Distribution>,
        lambda: f64,
    ) -> Result<Self, VerifyError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(VerifyError::LambdaOutOfRange(lambda));
        }
        if distributions_a.len() != distributions_b.len() {
            return Err(VerifyError::PositionMismatch {
                a: distributions_a.len(),
                b: distributions_b.len(),
            });
        }
        let mut sizes = distributions_a.iter().chain(&distributions_b).map(Distribution::len);
        if let Some(first) = sizes.next() {
            if sizes.any(|s| s != first) {
                return Err(VerifyError::VocabularyMismatch);
            }
        }
        Ok(Self {
            distributions_a,
            distributions_b,
            lambda,
        })
    }

    pub fn positions(&self) -> usize {
        self.distributions_a.len()
    }

    /// Zero when there are no positions.
    pub fn vocab_size(&self) -> usize {
        self.distributions_a.first().map_or(0, Distribution::len)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub max_log_ratio: f64,
    pub theoretical_bound: f64,
    pub argmax_sequence: Vec<usize>,
    pub tight: bool,
}

impl RatioReport {
    pub fn within_bound(&self) -> bool {
        self.max_log_ratio <= self.theoretical_bound + BOUND_TOLERANCE
    }
}

/// `z * ln((1 + (|V|-1) * lambda) / (1 - lambda))`, as written.
pub fn theoretical_bound(lambda: f64, vocab_size: usize, positions: usize) -> f64 {
    let v = vocab_size as f64;
    positions as f64 * ((1.0 + (v - 1.0) * lambda) / (1.0 - lambda)).ln()
}

/// Probability that perturbed sampling emits exactly `y`.
pub fn output_probability(distributions: &[Distribution], lambda: f64, y: &[usize]) -> Result<f64, VerifyError> {
    Ok(output_log_probability(distributions, lambda, y)?.exp())
}

pub fn output_log_probability(distributions: &[Distribution], lambda: f64, y: &[usize]) -> Result<f64, VerifyError> {
    if y.len() != distributions.len() {
        return Err(VerifyError::SequenceLength {
            expected: distributions.len(),
            got: y.len(),
        });
    }
    let mut log_p = 0.0;
    for (q, &token) in distributions.iter().zip(y) {
        let mass = q.get(token).ok_or(SimplexError::DimensionMismatch {
            expected: q.len(),
            actual: token + 1,
        })?;
        log_p += (lambda * mass + (1.0 - lambda) / q.len() as f64).ln();
    }
    Ok(log_p)
}

fn perturbed_logs(distributions: &[Distribution], lambda: f64) -> Vec<Vec<f64>> {
    distributions
        .iter()
        .map(|q| {
            let floor = (1.0 - lambda) / q.len() as f64;
            q.mass().iter().map(|&m| (lambda * m + floor).ln()).collect()
        })
        .collect()
}

/// Enumerates all `|V|^z` outputs and reports the worst log-ratio `a : b`.
pub fn max_likelihood_ratio(pair: &NeighborPair) -> Result<RatioReport, VerifyError> {
    let z = pair.positions();
    let v = pair.vocab_size();
    if z > MAX_POSITIONS || v > MAX_VOCAB {
        return Err(VerifyError::TooLarge {
            vocab_size: v,
            positions: z,
        });
    }
    let log_a = perturbed_logs(&pair.distributions_a, pair.lambda);
    let log_b = perturbed_logs(&pair.distributions_b, pair.lambda);

    let mut y = vec![0usize; z];
    let mut best = f64::NEG_INFINITY;
    let mut argmax = y.clone();
    loop {
        let ratio: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &k)| log_a[i][k] - log_b[i][k])
            .sum();
        if ratio > best {
            best = ratio;
            argmax.copy_from_slice(&y);
        }
        // Odometer increment over V^z.
        let mut i = 0;
        while i < z {
            y[i] += 1;
            if y[i] < v {
                break;
            }
            y[i] = 0;
            i += 1;
        }
        if i == z {
            break;
        }
    }

    let bound = if z == 0 { 0.0 } else { theoretical_bound(pair.lambda, v, z) };
    Ok(RatioReport {
        max_log_ratio: best,
        theoretical_bound: bound,
        argmax_sequence: argmax,
        tight: bound - best < BOUND_TOLERANCE,
    })
}

/// A point drawn uniformly from the simplex of dimension `size`.
pub fn random_simplex_point<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Result<Distribution, SimplexError> {
    let draws: Vec<f64> = (0..size).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    Distribution::new(draws.into_iter().map(|d| d / total).collect())
}

/// Point mass on token 0 at every position against point mass on token 1.
/// This pair meets the bound with equality.
pub fn adversarial_pair(vocab_size: usize, positions: usize, lambda: f64) -> Result<NeighborPair, VerifyError> {
    let a = (0..positions)
        .map(|_| Distribution::point_mass(vocab_size, 0))
        .collect::<Result<_, _>>()?;
    let b = (0..positions)
        .map(|_| Distribution::point_mass(vocab_size, 1))
        .collect::<Result<_, _>>()?;
    NeighborPair::new(a, b, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub vocab_size: usize,
    pub positions: usize,
    pub lambda: f64,
    pub trials: usize,
    pub theoretical_bound: f64,
    /// Largest log-ratio over all random and adversarial pairs.
    pub worst_log_ratio: f64,
    pub violations: usize,
    pub adversarial_tight: bool,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs `trials` random neighbor pairs plus the adversarial pair (in both
/// directions) through [`max_likelihood_ratio`].
pub fn verify_cell<R: Rng + ?Sized>(
    vocab_size: usize,
    positions: usize,
    lambda: f64,
    trials: usize,
    rng: &mut R,
) -> Result<VerifySummary, VerifyError> {
    if trials == 0 {
        return Err(VerifyError::NoTrials);
    }
    if vocab_size < 2 {
        return Err(VerifyError::VocabularyTooSmall(vocab_size));
    }
    if positions > MAX_POSITIONS || vocab_size > MAX_VOCAB {
        return Err(VerifyError::TooLarge {
            vocab_size,
            positions,
        });
    }
    let bound = theoretical_bound(lambda, vocab_size, positions);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;

    let adversarial = adversarial_pair(vocab_size, positions, lambda)?;
    let reversed = NeighborPair::new(
        adversarial.distributions_b.clone(),
        adversarial.distributions_a.clone(),
        lambda,
    )?;
    let mut adversarial_tight = true;
    for pair in [&adversarial, &reversed] {
        let report = max_likelihood_ratio(pair)?;
        adversarial_tight &= report.tight;
        violations += usize::from(!report.within_bound());
        worst = worst.max(report.max_log_ratio);
    }

    for _ in 0..trials {
        let mut draw = || {
            (0..positions)
                .map(|_| random_simplex_point(vocab_size, rng))
                .collect::<Result<Vec<_>, _>>()
        };
        let a = draw()?;
        let b = draw()?;
        let report = max_likelihood_ratio(&NeighborPair::new(a, b, lambda)?)?;
        violations += usize::from(!report.within_bound());
        worst = worst.max(report.max_log_ratio);
    }

    Ok(VerifySummary {
        vocab_size,
        positions,
        lambda,
        trials,
        theoretical_bound: bound,
        worst_log_ratio: worst,
        violations,
        adversarial_tight,
    })
}

/// True iff no pair in [`verify_cell`] exceeds the bound.
pub fn verify_dp<R: Rng + ?Sized>(
    vocab_size: usize,
    positions: usize,
    lambda: f64,
    trials: usize,
    rng: &mut R,
) -> Result<bool, VerifyError> {
    Ok(verify_cell(vocab_size, positions, lambda, trials, rng)?.passed())
}
