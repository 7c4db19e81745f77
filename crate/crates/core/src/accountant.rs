//! Privacy loss of perturbed random sampling.
//!
//! One sampled token from a perturbed distribution costs
//! `ln((1 + (|V| - 1) * lambda) / (1 - lambda))` nats, and the cost adds up
//! linearly over the tokens predicted for one input. All values are in nats.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountError {
    /// `lambda == 1` leaves the model output untouched; no finite epsilon exists.
    #[error("privacy loss is unbounded at lambda = 1")]
    Unbounded,
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("vocabulary size must be at least 2, got {0}")]
    VocabularyTooSmall(usize),
    #[error("prediction count must be a finite non-negative number, got {0}")]
    InvalidCount(f64),
    #[error("target epsilon must be a finite non-negative number, got {0}")]
    InvalidEpsilon(f64),
    #[error("prediction cap must be at least 1")]
    ZeroCap,
    #[error("cannot average epsilon over an empty corpus")]
    EmptyCorpus,
    #[error("privacy budget exhausted: {made} of {cap} predictions used, {requested} more requested")]
    BudgetExhausted { made: u64, cap: u64, requested: u64 },
}

/// Either a finite epsilon or the deliberate `lambda = 1` infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivacyLoss {
    Finite(f64),
    Unbounded,
}

impl PrivacyLoss {
    pub fn finite(self) -> Option<f64> {
        match self {
            PrivacyLoss::Finite(eps) => Some(eps),
            PrivacyLoss::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, PrivacyLoss::Unbounded)
    }
}

impl fmt::Display for PrivacyLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyLoss::Finite(eps) => write!(f, "{eps}"),
            PrivacyLoss::Unbounded => f.write_str("inf"),
        }
    }
}

fn check_inputs(lambda: f64, vocab_size: usize) -> Result<(), AccountError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(AccountError::LambdaOutOfRange(lambda));
    }
    if vocab_size < 2 {
        return Err(AccountError::VocabularyTooSmall(vocab_size));
    }
    if lambda == 1.0 {
        return Err(AccountError::Unbounded);
    }
    Ok(())
}

/// Epsilon of a single sampled token.
pub fn per_token_epsilon(lambda: f64, vocab_size: usize) -> Result<f64, AccountError> {
    check_inputs(lambda, vocab_size)?;
    // (1 + (V-1)λ) / (1-λ) == 1 + Vλ/(1-λ); ln_1p keeps small λ accurate.
    Ok((vocab_size as f64 * lambda / (1.0 - lambda)).ln_1p())
}

/// Epsilon of `t` sampled tokens. `t` may be fractional when it is a corpus
/// average of mask counts.
pub fn sequence_epsilon(lambda: f64, vocab_size: usize, t: f64) -> Result<f64, AccountError> {
    if !t.is_finite() || t < 0.0 {
        return Err(AccountError::InvalidCount(t));
    }
    Ok(t * per_token_epsilon(lambda, vocab_size)?)
}

/// Like [`sequence_epsilon`], but maps `lambda == 1` to [`PrivacyLoss::Unbounded`].
pub fn privacy_loss(lambda: f64, vocab_size: usize, t: f64) -> Result<PrivacyLoss, AccountError> {
    match sequence_epsilon(lambda, vocab_size, t) {
        Ok(eps) => Ok(PrivacyLoss::Finite(eps)),
        Err(AccountError::Unbounded) => Ok(PrivacyLoss::Unbounded),
        Err(e) => Err(e),
    }
}

/// Inverse of [`sequence_epsilon`] in `lambda`.
pub fn lambda_for_epsilon(
    target_epsilon: f64,
    vocab_size: usize,
    t: f64,
) -> Result<f64, AccountError> {
    if !target_epsilon.is_finite() || target_epsilon < 0.0 {
        return Err(AccountError::InvalidEpsilon(target_epsilon));
    }
    if vocab_size < 2 {
        return Err(AccountError::VocabularyTooSmall(vocab_size));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(AccountError::InvalidCount(t));
    }
    let r_minus_one = (target_epsilon / t).exp_m1();
    if r_minus_one.is_infinite() {
        return Ok(1.0);
    }
    Ok(r_minus_one / (r_minus_one + vocab_size as f64))
}

/// Running spend of one decode session against a cap on predicted tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAccount {
    vocab_size: usize,
    lambda: f64,
    per_token_epsilon: f64,
    predictions_made: u64,
    cap: u64,
}

impl PrivacyAccount {
    pub fn new(lambda: f64, vocab_size: usize, cap: u64) -> Result<Self, AccountError> {
        let per_token_epsilon = per_token_epsilon(lambda, vocab_size)?;
        if cap == 0 {
            return Err(AccountError::ZeroCap);
        }
        Ok(Self {
            vocab_size,
            lambda,
            per_token_epsilon,
            predictions_made: 0,
            cap,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn per_token_epsilon(&self) -> f64 {
        self.per_token_epsilon
    }

    pub fn predictions_made(&self) -> u64 {
        self.predictions_made
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn remaining(&self) -> u64 {
        self.cap - self.predictions_made
    }

    pub fn cumulative_epsilon(&self) -> f64 {
        self.predictions_made as f64 * self.per_token_epsilon
    }

    /// Epsilon the session would have spent once the whole cap is used.
    pub fn epsilon_at_cap(&self) -> f64 {
        self.cap as f64 * self.per_token_epsilon
    }

    pub fn record_prediction(self) -> Result<Self, AccountError> {
        self.record_predictions(1)
    }

    /// Charges `n` predictions at once, or none of them.
    pub fn record_predictions(self, n: u64) -> Result<Self, AccountError> {
        if n > self.remaining() {
            return Err(AccountError::BudgetExhausted {
                made: self.predictions_made,
                cap: self.cap,
                requested: n,
            });
        }
        Ok(Self {
            predictions_made: self.predictions_made + n,
            ..self
        })
    }
}

/// Corpus-level epsilon, using the mean mask count as `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub lambda: f64,
    pub avg_masked_tokens: f64,
    pub avg_epsilon: f64,
    pub per_example_epsilons: Vec<f64>,
}

pub fn corpus_average_epsilon(
    mask_counts: &[usize],
    lambda: f64,
    vocab_size: usize,
) -> Result<EpsilonReport, AccountError> {
    if mask_counts.is_empty() {
        return Err(AccountError::EmptyCorpus);
    }
    let per_token = per_token_epsilon(lambda, vocab_size)?;
    let total: usize = mask_counts.iter().sum();
    let avg_masked_tokens = total as f64 / mask_counts.len() as f64;
    Ok(EpsilonReport {
        lambda,
        avg_masked_tokens,
        avg_epsilon: avg_masked_tokens * per_token,
        per_example_epsilons: mask_counts
            .iter()
            .map(|&z| z as f64 * per_token)
            .collect(),
    })
}
