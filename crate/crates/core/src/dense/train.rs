//! Retriever training with a multiple-instance loss over batch negatives.
//!
//! Each query `i` in a batch is scored against the concatenation `U` of all
//! members' retrieved parts (a multiset; a part retrieved by two members
//! appears twice). Entries from `i`'s own source table are masked out.
//! With `ρ_i = softmax(s_i)` over the unmasked entries and `P_i` the mass on
//! entries whose part is in `R+_i`:
//!
//! ```text
//! L      = Σ_i −ln P_i
//! ∂L/∂s_iu = ρ_iu − [u ∈ R+_i] · ρ_iu / P_i
//! ```

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{dot, Encoder, SparseGrad};
use crate::catalog::{PartCatalog, PartId};
use crate::error::{Error, Result};
use crate::evidence::{build_answer_bearing_sets, GoldSet, RetrievalExample};
use crate::hashing::SparseVec;
use crate::par::Execution;
use crate::sparse::SparseIndex;
use crate::table::{linearize_query, AugmentationQuery, NormalizationPolicy};

/// Numerically stable `ln Σ exp(x)`; `-∞` for an empty input.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs.iter().copied());
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// `−ln Σ_{positive} softmax(scores)` and its gradient w.r.t. `scores`.
pub fn mil_loss_from_scores(scores: &[f64], positive: &[bool]) -> (f64, Vec<f64>) {
    debug_assert_eq!(scores.len(), positive.len());
    let all = log_sum_exp(scores.iter().copied());
    let pos = log_sum_exp(scores.iter().zip(positive).filter(|p| *p.1).map(|p| *p.0));
    let grad = scores
        .iter()
        .zip(positive)
        .map(|(&s, &p)| {
            let occurrence_probs = (s - all).exp();
            if p {
                occurrence_probs - (s - pos).exp()
            } else {
                occurrence_probs
            }
        })
        .collect();
    (all - pos, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Positive,
    Negative,
    Masked,
}

/// Featurized batch: query inputs, unique part inputs, and the multiset `U`.
#[derive(Debug, Clone)]
pub struct MilBatch {
    queries: Vec<SparseVec>,
    parts: Vec<SparseVec>,
    /// `U` as indices into `parts`.
    entries: Vec<usize>,
    /// `slots[i][u]`
    slots: Vec<Vec<Slot>>,
}

impl MilBatch {
    pub fn new(
        examples: &[&RetrievalExample],
        query_enc: &Encoder,
        context_enc: &Encoder,
        catalog: &PartCatalog,
        exec: Execution,
    ) -> Self {
        let queries = exec.map(examples, |e| query_enc.features(&e.query_text));
        let mut unique: BTreeMap<PartId, usize> = BTreeMap::new();
        let mut order: Vec<PartId> = Vec::new();
        let mut entry_parts = Vec::new();
        for e in examples {
            for (p, _) in e.retrieved() {
                let next = unique.len();
                let slot = *unique.entry(p).or_insert_with(|| {
                    order.push(p);
                    next
                });
                entry_parts.push((p, slot));
            }
        }
        let parts = exec.map(&order, |&p| context_enc.features(catalog.text(p)));
        let slots = examples
            .iter()
            .map(|e| {
                let pos: HashSet<PartId> = e.positives.iter().copied().collect();
                entry_parts
                    .iter()
                    .map(|&(p, _)| {
                        if e.source_table_id.as_deref() == Some(catalog.source_of(p)) {
                            Slot::Masked
                        } else if pos.contains(&p) {
                            Slot::Positive
                        } else {
                            Slot::Negative
                        }
                    })
                    .collect()
            })
            .collect();
        MilBatch { queries, parts, entries: entry_parts.iter().map(|e| e.1).collect(), slots }
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    /// Query and unique-part input features, for finite-difference checks.
    pub fn inputs(&self) -> (&[SparseVec], &[SparseVec]) {
        (&self.queries, &self.parts)
    }
}

/// Gradients of the batch loss for both towers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TowerGrads {
    pub query: SparseGrad,
    pub context: SparseGrad,
}

impl TowerGrads {
    pub fn norm(&self) -> f64 {
        (self.query.norm_sq() + self.context.norm_sq()).sqrt()
    }
}

/// Summed batch loss, plus analytic gradients when `with_grad`.
pub fn mil_batch_loss(
    query_enc: &Encoder,
    context_enc: &Encoder,
    batch: &MilBatch,
    with_grad: bool,
    exec: Execution,
) -> (f64, Option<TowerGrads>) {
    let qs = exec.map(&batch.queries, |x| query_enc.encode_features(x));
    let es = exec.map(&batch.parts, |y| context_enc.encode_features(y));
    let dim = query_enc.dim();
    // per query: loss, dL/ds over U (0 where masked), dL/dq
    let rows = exec.map_range(batch.n_queries(), |i| {
        let live: Vec<usize> = (0..batch.n_entries()).filter(|&u| batch.slots[i][u] != Slot::Masked).collect();
        let scores: Vec<f64> = live.iter().map(|&u| dot(&qs[i], &es[batch.entries[u]])).collect();
        let pos: Vec<bool> = live.iter().map(|&u| batch.slots[i][u] == Slot::Positive).collect();
        let (loss, g) = mil_loss_from_scores(&scores, &pos);
        let mut gs = vec![0.0; batch.n_entries()];
        let mut dq = vec![0.0; dim];
        for (&u, &gu) in live.iter().zip(&g) {
            gs[u] = gu;
            if with_grad {
                for (d, e) in dq.iter_mut().zip(&es[batch.entries[u]]) {
                    *d += gu * e;
                }
            }
        }
        (loss, gs, dq)
    });
    let loss: f64 = rows.iter().map(|r| r.0).sum();
    if !with_grad {
        return (loss, None);
    }
    let mut entries_of: Vec<Vec<usize>> = vec![Vec::new(); batch.parts.len()];
    for (u, &p) in batch.entries.iter().enumerate() {
        entries_of[p].push(u);
    }
    let des = exec.map(&entries_of, |us| {
        let mut de = vec![0.0; dim];
        for (i, row) in rows.iter().enumerate() {
            for &u in us {
                let g = row.1[u];
                if g != 0.0 {
                    for (d, q) in de.iter_mut().zip(&qs[i]) {
                        *d += g * q;
                    }
                }
            }
        }
        de
    });
    let mut grads = TowerGrads::default();
    for (x, row) in batch.queries.iter().zip(&rows) {
        grads.query.add_outer(x, &row.2);
    }
    for (y, de) in batch.parts.iter().zip(&des) {
        grads.context.add_outer(y, de);
    }
    (loss, Some(grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for RetrieverTrainConfig {
    fn default() -> Self {
        RetrieverTrainConfig { batch_size: 128, epochs: 5, lr: 5.0, seed: 0, clip_norm: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrieverTrainReport {
    pub examples: usize,
    pub epoch_mean_loss: Vec<f64>,
}

/// Scale factor that brings the global gradient norm down to `clip`.
pub fn clip_scale(norm: f64, clip: f64) -> f64 {
    if norm > clip && norm > 0.0 {
        clip / norm
    } else {
        1.0
    }
}

/// SGD over shuffled batches; both towers are updated.
pub fn train_retriever(
    query_enc: &mut Encoder,
    context_enc: &mut Encoder,
    examples: &[RetrievalExample],
    catalog: &PartCatalog,
    cfg: &RetrieverTrainConfig,
    exec: Execution,
) -> Result<RetrieverTrainReport> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if let Some(e) = examples.iter().find(|e| e.positives.is_empty()) {
        return Err(Error::InvalidArgument(format!("training example without positives: {:?}", e.query_text)));
    }
    let mut report = RetrieverTrainReport { examples: examples.len(), ..Default::default() };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let members: Vec<&RetrievalExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let batch = MilBatch::new(&members, query_enc, context_enc, catalog, exec);
            let (loss, grads) = mil_batch_loss(query_enc, context_enc, &batch, true, exec);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, context: format!("retriever epoch {epoch} batch {b}") });
            }
            total += loss;
            let grads = grads.expect("requested");
            let step = cfg.lr * clip_scale(grads.norm(), cfg.clip_norm);
            query_enc.apply_gradient(&grads.query, step)?;
            context_enc.apply_gradient(&grads.context, step)?;
        }
        report.epoch_mean_loss.push(if examples.is_empty() { 0.0 } else { total / examples.len() as f64 });
    }
    Ok(report)
}

/// BM25 retrievals (own table excluded) turned into training examples.
/// Returns the examples and the number of queries skipped for lack of an
/// answer-bearing part.
pub fn gather_examples(
    queries: &[AugmentationQuery],
    sparse: &SparseIndex,
    catalog: &PartCatalog,
    depth: usize,
    policy: Option<NormalizationPolicy>,
    exec: Execution,
) -> (Vec<RetrievalExample>, usize) {
    let built = exec.map(queries, |q| {
        let text = linearize_query(q);
        let own = q.source_table_id.as_deref().map(|s| catalog.parts_of_table(s)).unwrap_or(0..0);
        let hits = sparse.search_filtered(&text, depth, |p| !own.contains(&p));
        let ids: Vec<PartId> = hits.iter().map(|h| h.0).collect();
        let gold = GoldSet::new(&q.gold, policy.unwrap_or_else(|| q.task.default_normalization()));
        build_answer_bearing_sets(text, q.task, &gold, q.source_table_id.as_deref(), &ids, catalog)
    });
    let skipped = built.iter().filter(|b| b.is_none()).count();
    (built.into_iter().flatten().collect(), skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_half_positive() {
        let (loss, _) = mil_loss_from_scores(&[0.3, 0.3], &[true, false]);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_positive_is_zero_loss() {
        let (loss, g) = mil_loss_from_scores(&[1.0, -2.0, 0.5], &[true, true, true]);
        assert!(loss.abs() < 1e-12);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn extra_negative_never_lowers_loss() {
        let base = mil_loss_from_scores(&[1.0, 0.0], &[true, false]).0;
        for s in [-5.0, 0.0, 3.0] {
            assert!(mil_loss_from_scores(&[1.0, 0.0, s], &[true, false, false]).0 >= base);
        }
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_scale(0.5, 1.0), 1.0);
        assert_eq!(clip_scale(4.0, 1.0), 0.25);
        assert_eq!(clip_scale(0.0, 1.0), 1.0);
    }
}
