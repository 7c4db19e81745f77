//! Differentially-private decoding for language models.
//!
//! Each output distribution `q` of a model is replaced by
//! `lambda * q + (1 - lambda) * uniform` before a token is sampled from it.
//! Sampling `T` tokens this way is `epsilon`-DP with
//! `epsilon = T * ln((1 + (|V| - 1) * lambda) / (1 - lambda))`.
//!
//! - [`simplex`]: distributions and the perturbation itself
//! - [`accountant`]: epsilon, its inverse, and per-session budgets
//! - [`sampler`]: seeded perturb-then-sample decoding
//! - [`corpus`] and [`mlm`]: a small masked language model to drive the pipeline
//! - [`eval`]: perplexity and lambda sweeps
//! - [`verifier`]: exhaustive check of the bound on tiny instances
//! - [`cli`]: the `dpdecode` binary

pub mod accountant;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod mlm;
pub mod rng;
pub mod sampler;
pub mod simplex;
pub mod verifier;

pub use accountant::{PrivacyAccount, PrivacyLoss};
pub use corpus::{Corpus, MaskedExample};
pub use mlm::NGramMlm;
pub use sampler::{DecodeResult, DecodeSession};
pub use simplex::{Distribution, PerturbationParams, PerturbedDistribution, Vocabulary};
