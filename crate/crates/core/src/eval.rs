//! Corpus-level perplexity and privacy/utility sweeps over lambda.
//!
//! Perplexity is `exp(-mean ln q'(true token))` pooled over every masked
//! token of the corpus, where `q'` is the perturbed distribution. It is
//! computed from distributions rather than sampled tokens, so at
//! `lambda = 0` it is exactly `|V|`.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::accountant::{corpus_average_epsilon, AccountError, PrivacyLoss};
use crate::corpus::{mask_corpus, Corpus, CorpusError, DEFAULT_MASK_RATE};
use crate::mlm::{ModelError, NGramMlm};
use crate::rng;
use crate::simplex::{PerturbationParams, PerturbedDistribution, SimplexError};

pub const CSV_HEADER: &str = "lambda,avg_masked_tokens,avg_epsilon,perplexity_mean,perplexity_std,restarts";
pub const DEFAULT_RESTARTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("perplexity needs at least one scored token")]
    NoTokens,
    #[error("{distributions} distributions but {tokens} true tokens")]
    LengthMismatch { distributions: usize, tokens: usize },
    #[error("true token {token} is outside a distribution of size {size}")]
    TokenOutOfRange { token: usize, size: usize },
    #[error("restart count must be at least 1")]
    NoRestarts,
    #[error("restart {restart} masked no tokens; raise the mask rate or use a larger corpus")]
    NothingMasked { restart: usize },
    #[error("corpus vocabulary has {corpus} entries but the model's has {model}")]
    VocabularyMismatch { corpus: usize, model: usize },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `exp(-(1/N) * sum ln perturbed[i][true_tokens[i]])`.
pub fn perplexity(perturbed: &[PerturbedDistribution], true_tokens: &[usize]) -> Result<f64, EvalError> {
    if perturbed.len() != true_tokens.len() {
        return Err(EvalError::LengthMismatch {
            distributions: perturbed.len(),
            tokens: true_tokens.len(),
        });
    }
    if perturbed.is_empty() {
        return Err(EvalError::NoTokens);
    }
    let mut nll = 0.0;
    for (q, &token) in perturbed.iter().zip(true_tokens) {
        let p = q.get(token).ok_or(EvalError::TokenOutOfRange {
            token,
            size: q.len(),
        })?;
        nll -= p.ln();
    }
    Ok((nll / perturbed.len() as f64).exp())
}

/// Perturbed probability of a true token given its unperturbed probability.
fn perturbed_probability(q_true: f64, lambda: f64, vocab_size: usize) -> f64 {
    lambda * q_true + (1.0 - lambda) / vocab_size as f64
}

/// Same value as [`perplexity`], from the model's true-token probabilities
/// only. Only entry `true` of each perturbed distribution matters, so
/// sweeps never materialize full vectors.
pub fn perplexity_from_true_probabilities(
    q_true: &[f64],
    params: PerturbationParams,
    vocab_size: usize,
) -> Result<f64, EvalError> {
    if q_true.is_empty() {
        return Err(EvalError::NoTokens);
    }
    let nll: f64 = q_true
        .iter()
        .map(|&q| -perturbed_probability(q, params.lambda(), vocab_size).ln())
        .sum();
    Ok((nll / q_true.len() as f64).exp())
}

/// Derivative of mean log-likelihood in lambda, i.e. the mean of
/// `(q - 1/|V|) / (lambda * q + (1 - lambda)/|V|)`. Positive means corpus
/// perplexity is strictly decreasing in lambda at this point.
pub fn log_likelihood_slope(q_true: &[f64], lambda: f64, vocab_size: usize) -> f64 {
    let uniform = 1.0 / vocab_size as f64;
    let total: f64 = q_true
        .iter()
        .map(|&q| (q - uniform) / perturbed_probability(q, lambda, vocab_size))
        .sum();
    total / q_true.len() as f64
}

/// How masked-token log losses are combined into one perplexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Every masked token in the corpus weighs the same.
    #[default]
    Token,
    /// Mean loss per example first, then the mean over examples with at
    /// least one mask.
    Example,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub restarts: usize,
    pub base_seed: u64,
    pub mask_rate: f64,
    pub pooling: Pooling,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            base_seed: 0,
            mask_rate: DEFAULT_MASK_RATE,
            pooling: Pooling::Token,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub avg_epsilon: PrivacyLoss,
    pub perplexity_mean: f64,
    /// Population standard deviation across restarts.
    pub perplexity_std: f64,
    pub restarts: usize,
    pub avg_masked_tokens: f64,
}

/// Masked-token probabilities of one restart, grouped per example.
#[derive(Debug, Clone)]
pub struct RestartScores {
    pub seed: u64,
    pub per_example: Vec<Vec<f64>>,
}

impl RestartScores {
    pub fn mask_counts(&self) -> Vec<usize> {
        self.per_example.iter().map(Vec::len).collect()
    }

    pub fn pooled(&self) -> Vec<f64> {
        self.per_example.iter().flatten().copied().collect()
    }

    pub fn perplexity(&self, params: PerturbationParams, vocab_size: usize, pooling: Pooling) -> Result<f64, EvalError> {
        match pooling {
            Pooling::Token => perplexity_from_true_probabilities(&self.pooled(), params, vocab_size),
            Pooling::Example => {
                let losses: Vec<f64> = self
                    .per_example
                    .iter()
                    .filter(|q| !q.is_empty())
                    .map(|q| perplexity_from_true_probabilities(q, params, vocab_size).map(f64::ln))
                    .collect::<Result<_, _>>()?;
                if losses.is_empty() {
                    return Err(EvalError::NoTokens);
                }
                Ok((losses.iter().sum::<f64>() / losses.len() as f64).exp())
            }
        }
    }
}

/// Masks the corpus with `seed` and scores every held-out token.
pub fn score_restart(
    corpus: &Corpus,
    model: &NGramMlm,
    mask_rate: f64,
    seed: u64,
) -> Result<RestartScores, EvalError> {
    let masked = mask_corpus(corpus, mask_rate, &mut rng::seeded(seed))?;
    let per_example = masked
        .iter()
        .map(|ex| model.true_token_probabilities(ex))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RestartScores { seed, per_example })
}

/// One record per lambda, sorted by lambda.
///
/// Restart `r` masks with seed `base_seed + r`, and that mask pattern is
/// shared by every lambda, so lambda is the only thing that varies within a
/// restart. Restarts are scored in parallel; the result does not depend on
/// scheduling.
pub fn sweep(
    corpus: &Corpus,
    model: &NGramMlm,
    lambdas: &[f64],
    config: &SweepConfig,
) -> Result<Vec<SweepRecord>, EvalError> {
    if config.restarts == 0 {
        return Err(EvalError::NoRestarts);
    }
    let vocab_size = model.vocab().size();
    if corpus.vocab.size() != vocab_size {
        return Err(EvalError::VocabularyMismatch {
            corpus: corpus.vocab.size(),
            model: vocab_size,
        });
    }
    let params = lambdas
        .iter()
        .map(|&l| PerturbationParams::new(l))
        .collect::<Result<Vec<_>, _>>()?;

    let restarts: Vec<RestartScores> = (0..config.restarts)
        .into_par_iter()
        .map(|r| score_restart(corpus, model, config.mask_rate, config.base_seed.wrapping_add(r as u64)))
        .collect::<Result<_, _>>()?;
    if let Some(r) = restarts.iter().position(|s| s.per_example.iter().all(Vec::is_empty)) {
        return Err(EvalError::NothingMasked { restart: r });
    }
    let all_counts: Vec<usize> = restarts.iter().flat_map(RestartScores::mask_counts).collect();

    let mut records = params
        .iter()
        .map(|&p| {
            let ppl = restarts
                .iter()
                .map(|s| s.perplexity(p, vocab_size, config.pooling))
                .collect::<Result<Vec<_>, _>>()?;
            let n = ppl.len() as f64;
            let mean = ppl.iter().sum::<f64>() / n;
            let var = ppl.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let (avg_masked_tokens, avg_epsilon) = match corpus_average_epsilon(&all_counts, p.lambda(), vocab_size) {
                Ok(report) => (report.avg_masked_tokens, PrivacyLoss::Finite(report.avg_epsilon)),
                Err(AccountError::Unbounded) => (
                    all_counts.iter().sum::<usize>() as f64 / all_counts.len() as f64,
                    PrivacyLoss::Unbounded,
                ),
                Err(e) => return Err(e.into()),
            };
            Ok(SweepRecord {
                lambda: p.lambda(),
                avg_epsilon,
                perplexity_mean: mean,
                perplexity_std: var.sqrt(),
                restarts: config.restarts,
                avg_masked_tokens,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    records.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(records)
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent format");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if exponent < -4 || exponent >= digits as i32 {
        let sign = if exponent < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exponent.abs())
    } else {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv<W: Write>(records: &[SweepRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        let eps = match r.avg_epsilon {
            PrivacyLoss::Finite(e) => format_significant(e, 6),
            PrivacyLoss::Unbounded => "inf".into(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_significant(r.lambda, 6),
            format_significant(r.avg_masked_tokens, 6),
            eps,
            format_significant(r.perplexity_mean, 6),
            format_significant(r.perplexity_std, 6),
            r.restarts
        )?;
    }
    Ok(())
}
