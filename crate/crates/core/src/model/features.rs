//! Hashed word and character n-gram features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Number of hash buckets; a power of two, at least 2^10.
    pub hash_dim: usize,
    pub word_ngrams: Vec<usize>,
    /// Character n-grams, taken within each `<token>`-padded word.
    pub char_ngrams: Vec<usize>,
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hash_dim: 1 << 18,
            word_ngrams: vec![1, 2],
            char_ngrams: vec![3, 4, 5],
            hash_seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hash_dim.is_power_of_two() || self.hash_dim < 1 << 10 || self.hash_dim > 1 << 28 {
            return Err(Error::Config(format!(
                "hash_dim must be a power of two in [2^10, 2^28], got {}",
                self.hash_dim
            )));
        }
        if self.word_ngrams.iter().chain(&self.char_ngrams).any(|&n| n == 0 || n > 255) {
            return Err(Error::Config("n-gram orders must lie in 1..=255".into()));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn bucket(kind: u8, order: usize, gram: &str, config: &FeatureConfig) -> u32 {
    let mut key = Vec::with_capacity(gram.len() + 2);
    key.push(kind);
    key.push(order as u8);
    key.extend_from_slice(gram.as_bytes());
    (xxh3_64_with_seed(&key, config.hash_seed) & (config.hash_dim as u64 - 1)) as u32
}

/// L2-normalized hashed n-gram counts. The empty text maps to the zero vector.
pub fn featurize(text: &str, config: &FeatureConfig) -> SparseVector {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for &n in &config.word_ngrams {
        for window in tokens.windows(n) {
            *counts.entry(bucket(b'w', n, &window.join(" "), config)).or_default() += 1.0;
        }
    }
    if !config.char_ngrams.is_empty() {
        for token in &tokens {
            let padded: Vec<char> = std::iter::once('<')
                .chain(token.chars())
                .chain(std::iter::once('>'))
                .collect();
            for &n in &config.char_ngrams {
                for window in padded.windows(n) {
                    let gram: String = window.iter().collect();
                    *counts.entry(bucket(b'c', n, &gram, config)).or_default() += 1.0;
                }
            }
        }
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let (indices, values) = counts
        .into_iter()
        .map(|(i, v)| (i, v / norm))
        .unzip();
    SparseVector { indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero() {
        assert!(featurize("", &FeatureConfig::default()).is_empty());
    }

    #[test]
    fn deterministic_and_normalized() {
        let c = FeatureConfig::default();
        let a = featurize("the quick brown fox", &c);
        assert_eq!(a, featurize("the quick brown fox", &c));
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn word_order_matters_with_bigrams() {
        let c = FeatureConfig::default();
        let ab = featurize("a b", &c);
        let ba = featurize("b a", &c);
        assert_ne!(ab, ba);
        // the bigram buckets themselves differ under the shipped hash
        assert_ne!(bucket(b'w', 2, "a b", &c), bucket(b'w', 2, "b a", &c));
        let unigrams = FeatureConfig {
            word_ngrams: vec![1],
            char_ngrams: vec![],
            ..c
        };
        assert_eq!(featurize("a b", &unigrams), featurize("b a", &unigrams));
    }

    #[test]
    fn validation() {
        let mut c = FeatureConfig::default();
        assert!(c.validate().is_ok());
        c.hash_dim = 1000;
        assert!(c.validate().is_err());
        c.hash_dim = 512;
        assert!(c.validate().is_err());
    }
}
