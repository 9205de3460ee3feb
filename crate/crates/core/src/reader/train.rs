//! End-to-end reader training. The reader weights and the query tower are
//! updated; the context tower and the index stay fixed.
//!
//! With `u^j_n = −1/s(a)` for occurrences of a gold string `a` (0 otherwise):
//!
//! ```text
//! ∂L/∂z^j_n = σ_j ρ^j_n (u^j_n − Σ_m ρ^j_m u^j_m)
//! v_j       = Σ_n ρ^j_n u^j_n
//! ∂L/∂r_j   = σ_j (v_j − Σ_l σ_l v_l)
//! ∂L/∂q     = Σ_j ∂L/∂r_j · e_j
//! ```

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, part_weights, reader_loss};
use super::{Instance, QueryContext, ReaderModel};
use crate::catalog::{PartCatalog, PartId};
use crate::corpus::EntityVocab;
use crate::dense::train::clip_scale;
use crate::dense::{dot, DenseIndex, Encoder, SparseGrad};
use crate::error::{Error, Result};
use crate::evidence::GoldSet;
use crate::hashing::SparseVec;
use crate::par::Execution;
use crate::table::{linearize_query, AugmentationQuery, NormalizationPolicy};

/// One training query with its retrieved parts frozen in place.
#[derive(Debug, Clone)]
pub struct E2eInstance {
    /// Query-tower input features.
    pub x: SparseVec,
    /// Index vectors of the retrieved parts.
    pub part_vecs: Vec<Vec<f64>>,
    pub inst: Instance,
    pub gold: GoldSet,
}

impl E2eInstance {
    pub fn retrieval_scores(&self, tower: &Encoder) -> Vec<f64> {
        let q = tower.encode_features(&self.x);
        self.part_vecs.iter().map(|e| dot(&q, e)).collect()
    }

    /// `None` when no gold string is among the candidates.
    pub fn loss(&self, reader: &ReaderModel, tower: &Encoder) -> Option<f64> {
        let r = self.retrieval_scores(tower);
        let readings = self.inst.readings(reader, &r).ok()?;
        reader_loss(&aggregate(&readings), &self.gold)
    }

    /// Loss with gradients for the reader weights and the query tower.
    pub fn loss_and_grad(&self, reader: &ReaderModel, tower: &Encoder) -> Option<(f64, SparseVec, SparseGrad)> {
        let r = self.retrieval_scores(tower);
        let readings = self.inst.readings(reader, &r).ok()?;
        let answers = aggregate(&readings);
        let loss = reader_loss(&answers, &self.gold)?;
        let s: HashMap<&str, f64> = answers
            .iter()
            .filter(|a| self.gold.contains_normalized(&a.normalized))
            .map(|a| (a.normalized.as_str(), a.score))
            .collect();
        let part_probs = part_weights(&readings);
        let mut reader_pairs = Vec::new();
        let mut v = vec![0.0; readings.len()];
        for (j, reading) in readings.iter().enumerate() {
            if reading.occurrences.is_empty() {
                continue;
            }
            let u: Vec<f64> =
                reading.occurrences.iter().map(|o| s.get(o.normalized.as_str()).map_or(0.0, |sa| -1.0 / sa)).collect();
            v[j] = reading.occurrence_probs.iter().zip(&u).map(|(p, u)| p * u).sum();
            for (n, phi) in self.inst.features[j].iter().enumerate() {
                let dz = part_probs[j] * reading.occurrence_probs[n] * (u[n] - v[j]);
                if dz != 0.0 {
                    reader_pairs.extend(phi.iter().map(|(i, f)| (i, dz * f)));
                }
            }
        }
        let mean_v: f64 = part_probs.iter().zip(&v).map(|(s, v)| s * v).sum();
        let mut dq = vec![0.0; tower.dim()];
        for (j, e) in self.part_vecs.iter().enumerate() {
            let dr = part_probs[j] * (v[j] - mean_v);
            for (d, ei) in dq.iter_mut().zip(e) {
                *d += dr * ei;
            }
        }
        let mut tower_grad = SparseGrad::default();
        tower_grad.add_outer(&self.x, &dq);
        Some((loss, SparseVec::from_pairs(reader_pairs), tower_grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReaderTrainConfig {
    pub k: usize,
    pub epochs: usize,
    /// Step size for the reader weights.
    pub lr: f64,
    /// Step size for the query tower.
    pub query_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Defaults to the task's normalization.
    pub policy: Option<NormalizationPolicy>,
}

impl Default for ReaderTrainConfig {
    fn default() -> Self {
        ReaderTrainConfig {
            k: 5,
            epochs: 2,
            lr: 0.5,
            query_lr: 0.05,
            batch_size: 16,
            seed: 0,
            clip_norm: 1.0,
            policy: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReaderTrainReport {
    pub queries: usize,
    /// Instances without a gold candidate, summed over epochs.
    pub skipped: usize,
    pub epoch_mean_loss: Vec<f64>,
}

/// Retrieve `k` parts with the current query tower (own table excluded) and
/// freeze them into an instance.
#[allow(clippy::too_many_arguments)]
pub fn build_instance(
    query: &AugmentationQuery,
    tower: &Encoder,
    index: &DenseIndex,
    catalog: &PartCatalog,
    vocab: &EntityVocab,
    reader: &ReaderModel,
    k: usize,
    policy: NormalizationPolicy,
) -> Result<E2eInstance> {
    let x = tower.features(&linearize_query(query));
    let q = tower.encode_features(&x);
    let own = query.source_table_id.as_deref().map(|s| catalog.parts_of_table(s)).unwrap_or(0..0);
    let hits = index.search(&q, k, |p| !own.contains(&p))?;
    let ids: Vec<PartId> = hits.iter().map(|h| h.0).collect();
    let ctx = QueryContext::new(query, policy);
    let inst = Instance::prepare(&ctx, &ids, catalog, vocab, &reader.featurizer);
    Ok(E2eInstance {
        x,
        part_vecs: ids.iter().map(|&p| index.vector(p).to_vec()).collect(),
        inst,
        gold: GoldSet::new(&query.gold, policy),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn train_reader_e2e(
    reader: &mut ReaderModel,
    tower: &mut Encoder,
    index: &DenseIndex,
    catalog: &PartCatalog,
    vocab: &EntityVocab,
    queries: &[AugmentationQuery],
    cfg: &ReaderTrainConfig,
    exec: Execution,
) -> Result<ReaderTrainReport> {
    if cfg.k == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("k and batch size must be positive".into()));
    }
    if cfg.epochs > 0 && tower.kind() == crate::dense::EncoderKind::FrozenHash {
        return Err(Error::FrozenModel);
    }
    let mut report = ReaderTrainReport { queries: queries.len(), ..Default::default() };
    let mut order: Vec<usize> = (0..queries.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (r, t) = (&*reader, &*tower);
            let results = exec.map(chunk, |&i| -> Result<_> {
                let q = &queries[i];
                let policy = cfg.policy.unwrap_or_else(|| q.task.default_normalization());
                let inst = build_instance(q, t, index, catalog, vocab, r, cfg.k, policy)?;
                Ok(inst.loss_and_grad(r, t))
            });
            let mut reader_pairs = Vec::new();
            let mut tower_grad = SparseGrad::default();
            for res in results {
                match res? {
                    None => report.skipped += 1,
                    Some((loss, gr, gt)) => {
                        if !loss.is_finite() {
                            return Err(Error::NonFiniteLoss {
                                loss,
                                context: format!("reader epoch {epoch} batch {b}"),
                            });
                        }
                        total += loss;
                        reader_pairs.extend(gr.iter());
                        for (bucket, col) in gt.cols {
                            let acc = tower_grad.cols.entry(bucket).or_insert_with(|| vec![0.0; col.len()]);
                            acc.iter_mut().zip(&col).for_each(|(a, c)| *a += c);
                        }
                    }
                }
            }
            let reader_grad = SparseVec::from_pairs(reader_pairs);
            let norm = (reader_grad.norm().powi(2) + tower_grad.norm_sq()).sqrt();
            let scale = clip_scale(norm, cfg.clip_norm);
            for (i, g) in reader_grad.iter() {
                reader.weights[i as usize] -= cfg.lr * scale * g;
            }
            tower.apply_gradient(&tower_grad, cfg.query_lr * scale)?;
        }
        report.epoch_mean_loss.push(if queries.is_empty() { 0.0 } else { total / queries.len() as f64 });
    }
    Ok(report)
}
