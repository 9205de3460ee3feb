//! Text → vector towers.
//!
//! `FrozenHash` signs unigram/bigram hashes straight into `dim` buckets and
//! L2-normalizes. `TrainableLinear` hashes into `hash_buckets` bins,
//! L2-normalizes that count vector `x`, and returns `W x` with `W` of shape
//! `dim × hash_buckets`. `W` is stored bucket-major: column `b` lives at
//! `weights[b*dim .. (b+1)*dim]`, so sparse updates touch contiguous memory.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::hashing::{ngram_features, SparseVec};

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_HASH_BUCKETS: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    FrozenHash,
    TrainableLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub hash_buckets: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { kind: EncoderKind::TrainableLinear, dim: DEFAULT_DIM, hash_buckets: DEFAULT_HASH_BUCKETS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    dim: usize,
    hash_buckets: usize,
    weights: Vec<f64>,
}

/// Per-bucket gradient columns of a linear tower; only touched buckets are
/// stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub cols: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrad {
    /// `cols[b] += scale · v` for every `(b, scale)` in `x`.
    pub fn add_outer(&mut self, x: &SparseVec, v: &[f64]) {
        for (b, xb) in x.iter() {
            let col = self.cols.entry(b).or_insert_with(|| vec![0.0; v.len()]);
            for (c, vi) in col.iter_mut().zip(v) {
                *c += xb * vi;
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.cols.values().flatten().map(|g| g * g).sum()
    }

    pub fn get(&self, bucket: u32, row: usize) -> f64 {
        self.cols.get(&bucket).map_or(0.0, |c| c[row])
    }
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.hash_buckets == 0 {
            return Err(Error::InvalidArgument("encoder dim and hash_buckets must be positive".into()));
        }
        Ok(match cfg.kind {
            EncoderKind::FrozenHash => Self::frozen_hash(cfg.dim),
            EncoderKind::TrainableLinear => Self::trainable(cfg.dim, cfg.hash_buckets, seed),
        })
    }

    pub fn frozen_hash(dim: usize) -> Self {
        Encoder { kind: EncoderKind::FrozenHash, dim, hash_buckets: dim, weights: Vec::new() }
    }

    /// Weights drawn i.i.d. from N(0, 1/dim). Towers created with the same
    /// seed start identical.
    pub fn trainable(dim: usize, hash_buckets: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("valid std");
        let weights = (0..dim * hash_buckets).map(|_| normal.sample(&mut rng)).collect();
        Encoder { kind: EncoderKind::TrainableLinear, dim, hash_buckets, weights }
    }

    /// Linear tower with explicit bucket-major weights.
    pub fn from_weights(dim: usize, hash_buckets: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != dim * hash_buckets {
            return Err(Error::DimensionMismatch { left: weights.len(), right: dim * hash_buckets });
        }
        Ok(Encoder { kind: EncoderKind::TrainableLinear, dim, hash_buckets, weights })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_buckets(&self) -> usize {
        self.hash_buckets
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig { kind: self.kind, dim: self.dim, hash_buckets: self.hash_buckets }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, bucket: u32) -> &[f64] {
        let b = bucket as usize;
        &self.weights[b * self.dim..(b + 1) * self.dim]
    }

    pub fn weight_mut(&mut self, bucket: u32, row: usize) -> &mut f64 {
        &mut self.weights[bucket as usize * self.dim + row]
    }

    /// The input features the tower sees for `text`.
    pub fn features(&self, text: &str) -> SparseVec {
        match self.kind {
            EncoderKind::FrozenHash => ngram_features(text, self.dim, true).normalized(),
            EncoderKind::TrainableLinear => ngram_features(text, self.hash_buckets, false).normalized(),
        }
    }

    pub fn encode_features(&self, x: &SparseVec) -> Vec<f64> {
        match self.kind {
            EncoderKind::FrozenHash => x.to_dense(self.dim),
            EncoderKind::TrainableLinear => {
                let mut out = vec![0.0; self.dim];
                for (b, xb) in x.iter() {
                    for (o, w) in out.iter_mut().zip(self.column(b)) {
                        *o += xb * w;
                    }
                }
                out
            }
        }
    }

    /// Empty (or token-free) text maps to the zero vector.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_features(&self.features(text))
    }

    /// `W[:, b] -= step · grad[:, b]` for every stored column.
    pub fn apply_gradient(&mut self, grad: &SparseGrad, step: f64) -> Result<()> {
        if self.kind == EncoderKind::FrozenHash {
            return Err(Error::FrozenModel);
        }
        for (&b, g) in &grad.cols {
            if b as usize >= self.hash_buckets || g.len() != self.dim {
                return Err(Error::DimensionMismatch { left: g.len(), right: self.dim });
            }
            let start = b as usize * self.dim;
            for (w, gi) in self.weights[start..start + self.dim].iter_mut().zip(g) {
                *w -= step * gi;
            }
        }
        Ok(())
    }

    pub(crate) fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.u8(match self.kind {
            EncoderKind::FrozenHash => 0,
            EncoderKind::TrainableLinear => 1,
        })?;
        w.usize(self.dim)?;
        w.usize(self.hash_buckets)?;
        w.f64s(&self.weights)
    }

    pub(crate) fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        let kind = match r.u8()? {
            0 => EncoderKind::FrozenHash,
            1 => EncoderKind::TrainableLinear,
            k => return Err(r.err(format!("unknown encoder kind {k}"))),
        };
        let dim = r.usize()?;
        let hash_buckets = r.usize()?;
        let weights = r.f64s()?;
        let expected = match kind {
            EncoderKind::FrozenHash => 0,
            EncoderKind::TrainableLinear => dim * hash_buckets,
        };
        if weights.len() != expected || dim == 0 {
            return Err(r.err(format!("weight count {} does not match {dim}×{hash_buckets}", weights.len())));
        }
        Ok(Encoder { kind, dim, hash_buckets, weights })
    }
}

/// One SGD step on the query tower only.
pub fn e2e_update_query_tower(query: &mut Encoder, grad: &SparseGrad, lr: f64) -> Result<()> {
    query.apply_gradient(grad, lr)
}

pub fn score_pair(q: &[f64], d: &[f64]) -> Result<f64> {
    if q.len() != d.len() {
        return Err(Error::DimensionMismatch { left: q.len(), right: d.len() });
    }
    Ok(dot(q, d))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero() {
        for enc in [Encoder::frozen_hash(16), Encoder::trainable(8, 64, 1)] {
            let v = enc.encode("");
            assert_eq!(v.len(), enc.dim());
            assert!(v.iter().all(|&x| x == 0.0));
            assert_eq!(enc.encode(" : * | "), v);
        }
    }

    #[test]
    fn deterministic_and_unit_norm_when_frozen() {
        let enc = Encoder::frozen_hash(64);
        let a = enc.encode("Pink Floyd discography");
        assert_eq!(a, enc.encode("Pink Floyd discography"));
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_map_of_one_hot() {
        // identity-like weights: column b is e_b scaled by (b+1)
        let (dim, buckets) = (4, 4);
        let mut w = vec![0.0; dim * buckets];
        for b in 0..buckets {
            w[b * dim + b] = (b + 1) as f64;
        }
        let enc = Encoder::from_weights(dim, buckets, w).unwrap();
        let x = SparseVec { idx: vec![2], val: vec![1.0] };
        assert_eq!(enc.encode_features(&x), vec![0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn same_seed_same_towers() {
        assert_eq!(Encoder::trainable(8, 32, 7), Encoder::trainable(8, 32, 7));
        assert_ne!(Encoder::trainable(8, 32, 7), Encoder::trainable(8, 32, 8));
    }

    #[test]
    fn score_pair_cases() {
        assert_eq!(score_pair(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(score_pair(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let u = [0.6, 0.8];
        assert!((score_pair(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(score_pair(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn query_update_is_exact_sgd() {
        let mut enc = Encoder::trainable(4, 16, 3);
        let before = enc.clone();
        let mut g = SparseGrad::default();
        g.cols.insert(5, vec![1.0, -2.0, 0.5, 0.0]);
        e2e_update_query_tower(&mut enc, &g, 0.1).unwrap();
        for row in 0..4 {
            let want = before.column(5)[row] - 0.1 * g.cols[&5][row];
            assert_eq!(enc.column(5)[row], want);
        }
        assert_eq!(enc.column(4), before.column(4));
        let mut enc2 = before.clone();
        e2e_update_query_tower(&mut enc2, &SparseGrad::default(), 0.1).unwrap();
        assert_eq!(enc2, before);
        let mut frozen = Encoder::frozen_hash(4);
        assert!(matches!(e2e_update_query_tower(&mut frozen, &g, 0.1), Err(Error::FrozenModel)));
    }
}
