//! Perturb-then-sample decoding with a per-session privacy account.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::accountant::{AccountError, PrivacyAccount};
use crate::corpus::MaskedExample;
use crate::rng::{self, DpRng};
use crate::simplex::{perturb, Distribution, PerturbationParams, PerturbedDistribution, SimplexError, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("example has {masked} masked positions but {given} distributions were supplied")]
    DistributionCount { masked: usize, given: usize },
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Draws an index with probability `q.mass()[k]` by inverting the CDF with
/// one uniform draw.
pub fn sample_token<R: Rng + ?Sized>(q: &PerturbedDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (k, &m) in q.mass().iter().enumerate() {
        cumulative += m;
        if u < cumulative {
            return k;
        }
    }
    // Rounding left the total just under u; take the last reachable index.
    q.mass()
        .iter()
        .rposition(|&m| m > 0.0)
        .expect("a distribution has positive mass somewhere")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Masked position -> sampled token id.
    pub filled_tokens: BTreeMap<usize, usize>,
    pub epsilon_spent: f64,
    /// Perturbed distributions per masked position, kept only in audit mode.
    /// Publishing these reveals more than the sampled tokens do and is not
    /// covered by the privacy guarantee.
    pub per_position_distributions: Option<Vec<PerturbedDistribution>>,
}

impl DecodeResult {
    /// Writes the sampled tokens into the example's masked slots.
    pub fn fill(&self, example: &MaskedExample) -> Vec<usize> {
        example
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| t.or_else(|| self.filled_tokens.get(&i).copied()).unwrap_or(crate::corpus::UNK_ID))
            .collect()
    }
}

/// A single-owner decoding session: one vocabulary, one lambda, one budget
/// and one seeded generator.
#[derive(Debug)]
pub struct DecodeSession {
    vocab: Arc<Vocabulary>,
    params: PerturbationParams,
    account: PrivacyAccount,
    rng_seed: u64,
    rng: DpRng,
    audit: bool,
}

impl DecodeSession {
    /// `cap` is the most tokens this session may ever sample.
    pub fn new(
        vocab: Arc<Vocabulary>,
        params: PerturbationParams,
        cap: u64,
        rng_seed: u64,
    ) -> Result<Self, DecodeError> {
        let account = PrivacyAccount::new(params.lambda(), vocab.size(), cap)?;
        Ok(Self {
            vocab,
            params,
            account,
            rng_seed,
            rng: rng::seeded(rng_seed),
            audit: false,
        })
    }

    /// Keep the perturbed distributions in every [`DecodeResult`].
    ///
    /// Audit mode breaks the formal guarantee if those distributions leave
    /// the trusted side; the bound covers sampled tokens only.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> PerturbationParams {
        self.params
    }

    pub fn account(&self) -> &PrivacyAccount {
        &self.account
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Fills every masked position of `example`, or none of them.
    ///
    /// The whole example is charged against the budget before any token is
    /// drawn. If it does not fit, the session is left untouched.
    pub fn decode(
        &mut self,
        example: &MaskedExample,
        model_distributions: &[Distribution],
    ) -> Result<DecodeResult, DecodeError> {
        let masked = example.mask_count();
        if model_distributions.len() != masked {
            return Err(DecodeError::DistributionCount {
                masked,
                given: model_distributions.len(),
            });
        }
        let perturbed = model_distributions
            .iter()
            .map(|q| perturb(&self.vocab, q, self.params))
            .collect::<Result<Vec<_>, _>>()?;

        self.account = self.account.clone().record_predictions(masked as u64)?;

        let filled_tokens = example
            .masked_positions
            .iter()
            .zip(&perturbed)
            .map(|(&position, q)| (position, sample_token(q, &mut self.rng)))
            .collect();
        Ok(DecodeResult {
            filled_tokens,
            epsilon_spent: masked as f64 * self.account.per_token_epsilon(),
            per_position_distributions: self.audit.then_some(perturbed),
        })
    }
}
