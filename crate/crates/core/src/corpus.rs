//! Tokenized corpora and masked examples.
//!
//! Tokenization is lowercase plus whitespace splitting. Id 0 is always the
//! unknown token; the rest of the vocabulary is ordered by descending
//! frequency, ties broken by the token string.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::simplex::{SimplexError, Vocabulary};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 0;
/// Marks a masked position in human-written input.
pub const MASK_TOKEN: &str = "<mask>";
pub const DEFAULT_MASK_RATE: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("corpus contains no tokens")]
    Empty,
    #[error("mask rate must lie strictly between 0 and 1, got {0}")]
    InvalidMaskRate(f64),
    #[error("mask position {position} is out of bounds for an example of length {len}")]
    PositionOutOfBounds { position: usize, len: usize },
    #[error("mask positions must be strictly increasing")]
    UnorderedPositions,
    #[error("token id {id} is outside a vocabulary of size {size}")]
    UnknownTokenId { id: usize, size: usize },
    #[error(transparent)]
    Vocabulary(#[from] SimplexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub examples: Vec<Vec<usize>>,
    pub vocab: Vocabulary,
}

fn split_tokens(line: &str) -> impl Iterator<Item = String> + '_ {
    line.split_whitespace().map(str::to_lowercase)
}

/// Builds the vocabulary from `text` and tokenizes every non-blank line.
pub fn build_vocab_and_tokenize(text: &str) -> Result<Corpus, CorpusError> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in text.lines() {
        for token in split_tokens(line) {
            if token != UNK_TOKEN {
                *counts.entry(token).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

    let vocab = Vocabulary::new(
        std::iter::once(UNK_TOKEN.to_string()).chain(ranked.into_iter().map(|(t, _)| t)),
    )?;
    Ok(Corpus::with_vocab(vocab, text))
}

impl Corpus {
    /// Tokenizes `text` against an existing vocabulary; unseen words map to
    /// [`UNK_ID`]. Blank lines are skipped.
    pub fn with_vocab(vocab: Vocabulary, text: &str) -> Self {
        let examples = text
            .lines()
            .filter(|line| !line.trim().is_empty())
            .map(|line| tokenize(&vocab, line))
            .collect();
        Self { examples, vocab }
    }

    pub fn from_ids(vocab: Vocabulary, examples: Vec<Vec<usize>>) -> Result<Self, CorpusError> {
        let size = vocab.size();
        if let Some(&id) = examples.iter().flatten().find(|&&id| id >= size) {
            return Err(CorpusError::UnknownTokenId { id, size });
        }
        Ok(Self { examples, vocab })
    }

    pub fn token_count(&self) -> usize {
        self.examples.iter().map(Vec::len).sum()
    }
}

pub fn tokenize(vocab: &Vocabulary, line: &str) -> Vec<usize> {
    split_tokens(line)
        .map(|t| vocab.id(&t).unwrap_or(UNK_ID))
        .collect()
}

/// A token sequence with some positions hidden from the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedExample {
    /// Visible context; `None` at masked positions.
    pub tokens: Vec<Option<usize>>,
    pub masked_positions: Vec<usize>,
    /// Held-out tokens at `masked_positions`, when known.
    pub originals: Option<Vec<usize>>,
}

impl MaskedExample {
    /// Masks exactly `positions` (strictly increasing) of `tokens`.
    pub fn with_positions(tokens: &[usize], positions: &[usize]) -> Result<Self, CorpusError> {
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorpusError::UnorderedPositions);
        }
        if let Some(&position) = positions.iter().find(|&&p| p >= tokens.len()) {
            return Err(CorpusError::PositionOutOfBounds {
                position,
                len: tokens.len(),
            });
        }
        let mut visible: Vec<Option<usize>> = tokens.iter().copied().map(Some).collect();
        for &p in positions {
            visible[p] = None;
        }
        Ok(Self {
            tokens: visible,
            masked_positions: positions.to_vec(),
            originals: Some(positions.iter().map(|&p| tokens[p]).collect()),
        })
    }

    /// An example whose masked tokens are not known, e.g. parsed user input.
    pub fn from_visible(tokens: Vec<Option<usize>>) -> Self {
        let masked_positions = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_none())
            .map(|(i, _)| i)
            .collect();
        Self {
            tokens,
            masked_positions,
            originals: None,
        }
    }

    /// Parses a line where the literal [`MASK_TOKEN`] marks masked positions.
    pub fn parse(vocab: &Vocabulary, line: &str) -> Self {
        let tokens = line
            .split_whitespace()
            .map(|raw| {
                if raw == MASK_TOKEN {
                    None
                } else {
                    Some(vocab.id(&raw.to_lowercase()).unwrap_or(UNK_ID))
                }
            })
            .collect();
        Self::from_visible(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mask_count(&self) -> usize {
        self.masked_positions.len()
    }
}

/// Masks every token independently with probability `rate`.
pub fn mask_corpus<R: Rng + ?Sized>(
    corpus: &Corpus,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<MaskedExample>, CorpusError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(CorpusError::InvalidMaskRate(rate));
    }
    corpus
        .examples
        .iter()
        .map(|tokens| {
            let positions: Vec<usize> = (0..tokens.len())
                .filter(|_| rng.random::<f64>() < rate)
                .collect();
            MaskedExample::with_positions(tokens, &positions)
        })
        .collect()
}
