//! Hashed sparse feature vectors.

use std::collections::BTreeMap;

use crate::text::{fnv1a_parts, mix64, tokenize};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    /// Sum duplicate indices; zero entries are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (idx, val) = acc.into_iter().filter(|&(_, v)| v != 0.0).unzip();
        SparseVec { idx, val }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.val.iter_mut().for_each(|v| *v /= n);
        }
        self
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }
}

/// Stable 64-bit hash of a feature name made of several parts.
pub fn feature_hash(parts: &[&str]) -> u64 {
    mix64(fnv1a_parts(parts))
}

/// Bucket of a feature hash.
pub fn bucket(hash: u64, buckets: usize) -> u32 {
    (hash % buckets as u64) as u32
}

/// Unigram and bigram features of `text`, hashed into `buckets` bins.
/// With `signed`, a hash bit picks the sign of each contribution.
pub fn ngram_features(text: &str, buckets: usize, signed: bool) -> SparseVec {
    let toks = tokenize(text);
    let mut pairs = Vec::with_capacity(toks.len() * 2);
    let mut push = |h: u64| {
        let sign = if signed && h >> 63 == 1 { -1.0 } else { 1.0 };
        pairs.push((bucket(h, buckets), sign));
    };
    for (i, t) in toks.iter().enumerate() {
        push(feature_hash(&[t]));
        if i + 1 < toks.len() {
            push(feature_hash(&[t, &toks[i + 1]]));
        }
    }
    SparseVec::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let v = SparseVec::from_pairs([(5, 1.0), (2, 1.0), (5, 2.0), (3, 0.0)]);
        assert_eq!(v.idx, vec![2, 5]);
        assert_eq!(v.val, vec![1.0, 3.0]);
    }

    #[test]
    fn ngrams_count_unigrams_and_bigrams() {
        let v = ngram_features("a b a", 1 << 20, false);
        // a, b, a|b, b|a: "a" twice
        assert_eq!(v.val.iter().sum::<f64>(), 5.0);
        assert!(ngram_features("", 64, true).is_empty());
    }

    #[test]
    fn normalization_gives_unit_norm() {
        let v = ngram_features("pink floyd the wall", 1024, true).normalized();
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}
