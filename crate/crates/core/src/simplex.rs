//! Probability-simplex types and the interpolate-toward-uniform perturbation.
//!
//! A model emits a [`Distribution`] over a [`Vocabulary`]. Decoding privately
//! replaces it with `lambda * q + (1 - lambda) * u`, where `u` is uniform over
//! the vocabulary. Every perturbed entry is then pinned between
//! `(1 - lambda) / |V|` and `lambda + (1 - lambda) / |V|`, which is the whole
//! basis of the privacy guarantee in [`crate::accountant`].

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Entries must sum to one within this tolerance after construction.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Inputs whose total mass is off by at most this much are renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("vocabulary needs at least 2 tokens, got {0}")]
    VocabularyTooSmall(usize),
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
    #[error("distribution needs at least 2 entries, got {0}")]
    TooFewEntries(usize),
    #[error("entry {index} is {value}, expected a finite value in [0, 1]")]
    EntryOutOfRange { index: usize, value: f64 },
    #[error("mass sums to {sum}, which is more than {RENORMALIZE_TOLERANCE} away from 1")]
    NotNormalized { sum: f64 },
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("distribution has {actual} entries but the vocabulary has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Ordered token set. Index `k` is the stable id of `tokens[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self, SimplexError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() < 2 {
            return Err(SimplexError::VocabularyTooSmall(tokens.len()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id).is_some() {
                return Err(SimplexError::DuplicateToken(token.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A point on the probability simplex, stored in linear space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    mass: Vec<f64>,
}

impl Distribution {
    /// Validates `mass`. A total off by more than [`SUM_TOLERANCE`] but within
    /// [`RENORMALIZE_TOLERANCE`] is rescaled to one; anything further off is
    /// rejected.
    pub fn new(mut mass: Vec<f64>) -> Result<Self, SimplexError> {
        if mass.len() < 2 {
            return Err(SimplexError::TooFewEntries(mass.len()));
        }
        for (index, &value) in mass.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0 + RENORMALIZE_TOLERANCE).contains(&value) {
                return Err(SimplexError::EntryOutOfRange { index, value });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(SimplexError::NotNormalized { sum });
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            mass.iter_mut().for_each(|m| *m /= sum);
        }
        for m in mass.iter_mut() {
            *m = m.min(1.0);
        }
        Ok(Self { mass })
    }

    /// Uniform distribution over `size` outcomes.
    pub fn uniform_of_size(size: usize) -> Result<Self, SimplexError> {
        if size < 2 {
            return Err(SimplexError::TooFewEntries(size));
        }
        Ok(Self {
            mass: vec![1.0 / size as f64; size],
        })
    }

    /// All mass on `index`.
    pub fn point_mass(size: usize, index: usize) -> Result<Self, SimplexError> {
        if size < 2 {
            return Err(SimplexError::TooFewEntries(size));
        }
        if index >= size {
            return Err(SimplexError::DimensionMismatch {
                expected: size,
                actual: index + 1,
            });
        }
        let mut mass = vec![0.0; size];
        mass[index] = 1.0;
        Ok(Self { mass })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.mass.get(k).copied()
    }

    /// Interpolates toward uniform over `self.len()` outcomes.
    pub fn perturb(&self, params: PerturbationParams) -> PerturbedDistribution {
        let lambda = params.lambda();
        let floor = (1.0 - lambda) / self.mass.len() as f64;
        let mass = self.mass.iter().map(|&q| lambda * q + floor).collect();
        PerturbedDistribution { mass, lambda }
    }
}

/// The interpolation weight. `0` is uniform output, `1` is the raw model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PerturbationParams {
    lambda: f64,
}

impl PerturbationParams {
    pub fn new(lambda: f64) -> Result<Self, SimplexError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(SimplexError::LambdaOutOfRange(lambda));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl fmt::Display for PerturbationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lambda={}", self.lambda)
    }
}

/// Output of [`perturb`]. Every entry lies within [`bounds`] for its lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDistribution {
    mass: Vec<f64>,
    lambda: f64,
}

impl PerturbedDistribution {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.mass.get(k).copied()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Forgets the lambda, e.g. to perturb a second time.
    pub fn into_distribution(self) -> Distribution {
        Distribution { mass: self.mass }
    }
}

pub fn uniform(vocab: &Vocabulary) -> Distribution {
    Distribution {
        mass: vec![1.0 / vocab.size() as f64; vocab.size()],
    }
}

/// `lambda * q + (1 - lambda) / |V|` entrywise.
pub fn perturb(
    vocab: &Vocabulary,
    q: &Distribution,
    params: PerturbationParams,
) -> Result<PerturbedDistribution, SimplexError> {
    if q.len() != vocab.size() {
        return Err(SimplexError::DimensionMismatch {
            expected: vocab.size(),
            actual: q.len(),
        });
    }
    Ok(q.perturb(params))
}

/// Smallest and largest probability any token can have after perturbation.
pub fn bounds(params: PerturbationParams, vocab: &Vocabulary) -> (f64, f64) {
    bounds_for_size(params, vocab.size())
}

pub fn bounds_for_size(params: PerturbationParams, vocab_size: usize) -> (f64, f64) {
    let lambda = params.lambda();
    let floor = (1.0 - lambda) / vocab_size as f64;
    (floor, lambda + floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("w{i}"))).unwrap()
    }

    fn lambda(l: f64) -> PerturbationParams {
        PerturbationParams::new(l).unwrap()
    }

    #[test]
    fn vocabulary_rejects_singletons_and_duplicates() {
        assert_eq!(
            Vocabulary::new(["only"]),
            Err(SimplexError::VocabularyTooSmall(1))
        );
        assert_eq!(
            Vocabulary::new(["a", "b", "a"]),
            Err(SimplexError::DuplicateToken("a".into()))
        );
        let v = Vocabulary::new(["a", "b"]).unwrap();
        assert_eq!(v.size(), 2);
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.token(0), Some("a"));
    }

    #[test]
    fn distribution_renormalizes_small_drift_only() {
        let d = Distribution::new(vec![0.5, 0.5 + 5e-7]).unwrap();
        assert_relative_eq!(d.mass().iter().sum::<f64>(), 1.0, epsilon = 1e-15);

        assert!(matches!(
            Distribution::new(vec![0.5, 0.5 + 1e-5]),
            Err(SimplexError::NotNormalized { .. })
        ));
        assert!(matches!(
            Distribution::new(vec![-0.1, 1.1]),
            Err(SimplexError::EntryOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            Distribution::new(vec![f64::NAN, 1.0]),
            Err(SimplexError::EntryOutOfRange { .. })
        ));
        assert_eq!(
            Distribution::new(vec![1.0]),
            Err(SimplexError::TooFewEntries(1))
        );
    }

    #[test]
    fn lambda_must_be_in_closed_unit_interval() {
        assert!(PerturbationParams::new(0.0).is_ok());
        assert!(PerturbationParams::new(1.0).is_ok());
        assert_eq!(
            PerturbationParams::new(1.0001),
            Err(SimplexError::LambdaOutOfRange(1.0001))
        );
        assert!(PerturbationParams::new(-0.1).is_err());
        assert!(PerturbationParams::new(f64::NAN).is_err());
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform(&vocab(3)).mass(), &[1.0 / 3.0; 3]);
        assert_eq!(uniform(&vocab(2)).mass(), &[0.5, 0.5]);
        let big = uniform(&vocab(150_000));
        assert_eq!(big.len(), 150_000);
        assert!(big.mass().iter().all(|&m| m == 1.0 / 150_000.0));
    }

    #[test]
    fn perturb_examples() {
        let v = vocab(3);
        let q = Distribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        for m in perturb(&v, &q, lambda(0.0)).unwrap().mass() {
            assert_relative_eq!(*m, 1.0 / 3.0, epsilon = 1e-15);
        }

        let q = Distribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        assert_eq!(perturb(&v, &q, lambda(1.0)).unwrap().mass(), &[0.7, 0.2, 0.1]);

        // 0.5 * q + 1/6, evaluated by hand: 31/60, 16/60, 13/60.
        let p = perturb(&v, &q, lambda(0.5)).unwrap();
        let expected = [31.0 / 60.0, 16.0 / 60.0, 13.0 / 60.0];
        for (got, want) in p.mass().iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(p.lambda(), 0.5);
    }

    #[test]
    fn perturb_rejects_dimension_mismatch() {
        let q = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(
            perturb(&vocab(3), &q, lambda(0.5)),
            Err(SimplexError::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        );
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(bounds(lambda(0.0), &vocab(4)), (0.25, 0.25));
        assert_eq!(bounds(lambda(1.0), &vocab(4)), (0.0, 1.0));
        assert_eq!(bounds(lambda(0.5), &vocab(2)), (0.25, 0.75));
    }

    #[test]
    fn point_mass_hits_floor_and_ceiling() {
        let q = Distribution::point_mass(5, 2).unwrap();
        let p = q.perturb(lambda(0.3));
        let (floor, ceiling) = bounds_for_size(lambda(0.3), 5);
        assert_eq!(p.get(2), Some(ceiling));
        for k in [0, 1, 3, 4] {
            assert_eq!(p.get(k), Some(floor));
        }
    }
}
