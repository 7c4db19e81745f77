//! A symmetric-window count model that fills masked positions.
//!
//! For a position `i` the context is up to `order` tokens on each side,
//! truncated at the example boundary. Predictions are additively smoothed
//! relative frequencies, so every token always has positive probability:
//!
//! ```text
//! P(w | ctx) = (count(ctx, w) + alpha) / (count(ctx) + alpha * |V|)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{Corpus, MaskedExample, UNK_ID};
use crate::simplex::{Distribution, SimplexError, Vocabulary};

pub const DEFAULT_ORDER: usize = 1;
pub const DEFAULT_ALPHA: f64 = 0.1;

const FORMAT_MAGIC: &str = "ngram-mlm";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("smoothing constant must be finite and positive, got {0}")]
    InvalidAlpha(f64),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("example references token id {id}, but the vocabulary has {size} entries")]
    TokenOutOfRange { id: usize, size: usize },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Neighbors of a position: `left` is nearest-last, `right` nearest-first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl Context {
    fn around<T: Copy>(tokens: &[T], position: usize, order: usize, id: impl Fn(T) -> usize) -> Self {
        let start = position.saturating_sub(order);
        let end = (position + 1 + order).min(tokens.len());
        Self {
            left: tokens[start..position].iter().map(|&t| id(t)).collect(),
            right: tokens[position + 1..end].iter().map(|&t| id(t)).collect(),
        }
    }

    fn encode(&self, out: &mut String) {
        let join = |ids: &[usize], out: &mut String| {
            for (i, id) in ids.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{id}");
            }
        };
        join(&self.left, out);
        out.push('|');
        join(&self.right, out);
    }

    fn decode(s: &str) -> Result<Self, String> {
        let (left, right) = s
            .split_once('|')
            .ok_or_else(|| format!("context {s:?} has no '|' separator"))?;
        let ids = |part: &str| -> Result<Vec<usize>, String> {
            if part.is_empty() {
                return Ok(Vec::new());
            }
            part.split(',')
                .map(|id| id.parse().map_err(|_| format!("bad token id {id:?}")))
                .collect()
        };
        Ok(Self {
            left: ids(left)?,
            right: ids(right)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    tokens: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramMlm {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: BTreeMap<Context, ContextCounts>,
}

/// Counts every (context, centre token) pair in `corpus`.
pub fn train(corpus: &Corpus, order: usize, alpha: f64) -> Result<NGramMlm, ModelError> {
    if order == 0 {
        return Err(ModelError::ZeroOrder);
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ModelError::InvalidAlpha(alpha));
    }
    let mut counts: BTreeMap<Context, ContextCounts> = BTreeMap::new();
    for example in &corpus.examples {
        for (position, &token) in example.iter().enumerate() {
            let entry = counts
                .entry(Context::around(example, position, order, |t| t))
                .or_default();
            entry.total += 1;
            *entry.tokens.entry(token).or_default() += 1;
        }
    }
    Ok(NGramMlm {
        order,
        alpha,
        vocab: corpus.vocab.clone(),
        counts,
    })
}

impl NGramMlm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    /// Raw count of `token` after `context`, zero when unseen.
    pub fn count(&self, context: &Context, token: usize) -> u64 {
        self.counts
            .get(context)
            .and_then(|c| c.tokens.get(&token).copied())
            .unwrap_or(0)
    }

    /// Context of a masked-example position; masked neighbors read as unknown.
    pub fn context_of(&self, example: &MaskedExample, position: usize) -> Context {
        Context::around(&example.tokens, position, self.order, |t| t.unwrap_or(UNK_ID))
    }

    fn check_example(&self, example: &MaskedExample) -> Result<(), ModelError> {
        let size = self.vocab.size();
        match example.tokens.iter().flatten().find(|&&id| id >= size) {
            Some(&id) => Err(ModelError::TokenOutOfRange { id, size }),
            None => Ok(()),
        }
    }

    pub fn distribution_for(&self, context: &Context) -> Distribution {
        let size = self.vocab.size();
        let (total, tokens) = match self.counts.get(context) {
            Some(c) => (c.total, Some(&c.tokens)),
            None => (0, None),
        };
        let denom = total as f64 + self.alpha * size as f64;
        let mut mass = vec![self.alpha / denom; size];
        for (&token, &count) in tokens.into_iter().flatten() {
            mass[token] = (count as f64 + self.alpha) / denom;
        }
        Distribution::new(mass).expect("smoothed counts always form a distribution")
    }

    /// Probability of `token` at `context` without building the full vector.
    pub fn probability(&self, context: &Context, token: usize) -> f64 {
        let total = self.counts.get(context).map_or(0, |c| c.total);
        let denom = total as f64 + self.alpha * self.vocab.size() as f64;
        (self.count(context, token) as f64 + self.alpha) / denom
    }

    /// One distribution per masked position, in position order.
    pub fn predict_masked(&self, example: &MaskedExample) -> Result<Vec<Distribution>, ModelError> {
        self.check_example(example)?;
        Ok(example
            .masked_positions
            .iter()
            .map(|&p| self.distribution_for(&self.context_of(example, p)))
            .collect())
    }

    /// Model probability of each held-out token. Empty when the example
    /// carries no originals.
    pub fn true_token_probabilities(&self, example: &MaskedExample) -> Result<Vec<f64>, ModelError> {
        self.check_example(example)?;
        let Some(originals) = &example.originals else {
            return Ok(Vec::new());
        };
        Ok(example
            .masked_positions
            .iter()
            .zip(originals)
            .map(|(&p, &token)| self.probability(&self.context_of(example, p), token))
            .collect())
    }

    /// Plain-text serialization. Deterministic: the same model always
    /// produces the same bytes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{FORMAT_MAGIC} {FORMAT_VERSION} order={} alpha={} vocab={}",
            self.order,
            self.alpha,
            self.vocab.size()
        );
        for token in self.vocab.tokens() {
            out.push_str(token);
            out.push('\n');
        }
        for (context, counts) in &self.counts {
            for (token, count) in &counts.tokens {
                context.encode(&mut out);
                let _ = writeln!(out, "\t{token}\t{count}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| ModelError::Parse { line, message };

        let (_, header) = lines.next().ok_or_else(|| err(1, "empty model file".into()))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 5 || fields[0] != FORMAT_MAGIC {
            return Err(err(1, format!("not an {FORMAT_MAGIC} header: {header:?}")));
        }
        if fields[1] != FORMAT_VERSION {
            return Err(err(1, format!("unsupported version {:?}", fields[1])));
        }
        fn field<T: FromStr>(raw: &str, key: &str) -> Result<T, String> {
            raw.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("expected {key}=<value>, got {raw:?}"))
        }
        let order: usize = field(fields[2], "order").map_err(|m| err(1, m))?;
        let alpha: f64 = field(fields[3], "alpha").map_err(|m| err(1, m))?;
        let size: usize = field(fields[4], "vocab").map_err(|m| err(1, m))?;
        if order == 0 {
            return Err(ModelError::ZeroOrder);
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::InvalidAlpha(alpha));
        }

        let mut tokens = Vec::with_capacity(size);
        for _ in 0..size {
            let (_, token) = lines
                .next()
                .ok_or_else(|| err(0, format!("vocabulary truncated before {size} entries")))?;
            tokens.push(token.to_string());
        }
        let vocab = Vocabulary::new(tokens)?;

        let mut counts: BTreeMap<Context, ContextCounts> = BTreeMap::new();
        for (n, line) in lines {
            let mut parts = line.split('\t');
            let (Some(ctx), Some(token), Some(count), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err(n, format!("expected 3 tab-separated fields: {line:?}")));
            };
            let context = Context::decode(ctx).map_err(|m| err(n, m))?;
            let token: usize = token.parse().map_err(|_| err(n, format!("bad token id {token:?}")))?;
            let count: u64 = count.parse().map_err(|_| err(n, format!("bad count {count:?}")))?;
            if token >= size || context.left.iter().chain(&context.right).any(|&id| id >= size) {
                return Err(err(n, "token id outside vocabulary".into()));
            }
            let entry = counts.entry(context).or_default();
            if entry.tokens.insert(token, count).is_some() {
                return Err(err(n, "duplicate (context, token) entry".into()));
            }
            entry.total += count;
        }
        Ok(Self {
            order,
            alpha,
            vocab,
            counts,
        })
    }
}
