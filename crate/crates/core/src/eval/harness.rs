//! Evaluation runs over a query set: retrieve once at the largest depth,
//! then read every prefix.

use serde::{Deserialize, Serialize};

use super::metrics::{collapse, ndcg_at_10, reciprocal_rank, NDCG_CUTOFF};
use super::stats::confidence_interval;
use crate::catalog::{PartCatalog, PartId};
use crate::corpus::EntityVocab;
use crate::error::{Error, Result};
use crate::evidence::{bears_answer, GoldSet};
use crate::par::Execution;
use crate::pipeline::Retrieval;
use crate::reader::{aggregate, Instance, QueryContext, ReaderModel};
use crate::table::{AugmentationQuery, NormalizationPolicy, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub mean: f64,
    /// 95% t-interval half-width; absent with fewer than two queries.
    pub ci_half_width: Option<f64>,
}

impl Metric {
    pub fn of(values: &[f64]) -> Self {
        match confidence_interval(values) {
            Ok((mean, h)) => Metric { mean, ci_half_width: Some(h) },
            Err(_) => Metric {
                mean: if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 },
                ci_half_width: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigSnapshot {
    pub task: Task,
    pub k: usize,
    pub n_seed: Option<usize>,
    pub normalization: NormalizationPolicy,
    pub retrieval: String,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub source_table_id: Option<String>,
    pub gold: Vec<String>,
    /// Up to ten normalized predictions, best first.
    pub top: Vec<String>,
    pub reciprocal_rank: f64,
    pub ndcg_at_10: f64,
    pub answer_bearing_rr: f64,
    /// Some retrieved part bears a gold answer.
    pub answer_bearing: bool,
    /// Some retrieved part had a candidate.
    pub answerable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub config: EvalConfigSnapshot,
    pub mrr: Metric,
    pub ndcg_at_10: Metric,
    pub answer_bearing_mrr: Metric,
    /// Fraction of queries with at least one answer-bearing retrieval.
    pub answer_bearing_recall: f64,
    pub unanswerable: usize,
    pub records: Vec<QueryRecord>,
}

impl EvalResult {
    fn from_records(config: EvalConfigSnapshot, records: Vec<QueryRecord>) -> Self {
        let col = |f: fn(&QueryRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
        let n = records.len().max(1) as f64;
        EvalResult {
            mrr: Metric::of(&col(|r| r.reciprocal_rank)),
            ndcg_at_10: Metric::of(&col(|r| r.ndcg_at_10)),
            answer_bearing_mrr: Metric::of(&col(|r| r.answer_bearing_rr)),
            answer_bearing_recall: records.iter().filter(|r| r.answer_bearing).count() as f64 / n,
            unanswerable: records.iter().filter(|r| !r.answerable).count(),
            config,
            records,
        }
    }

    /// Task MRR cannot exceed the fraction of queries with answer-bearing
    /// evidence: answers are extractive.
    pub fn respects_extractive_bound(&self) -> bool {
        self.mrr.mean <= self.answer_bearing_recall + 1e-12
    }
}

/// What an evaluation run reads from.
#[derive(Debug, Clone, Copy)]
pub struct EvalSetup<'a> {
    pub catalog: &'a PartCatalog,
    pub vocab: &'a EntityVocab,
    pub retrieval: Retrieval<'a>,
    pub reader: &'a ReaderModel,
    /// Defaults to each query's task normalization.
    pub policy: Option<NormalizationPolicy>,
    pub exec: Execution,
}

pub fn evaluate(setup: &EvalSetup, queries: &[AugmentationQuery], k: usize) -> Result<EvalResult> {
    Ok(sweep_k(setup, queries, &[k])?.remove(0))
}

/// Evaluate the full pipeline at each `k` without retraining. Answer-bearing
/// recall is non-decreasing in `k` because each run reads a prefix of the
/// same retrieval.
pub fn sweep_k(setup: &EvalSetup, queries: &[AugmentationQuery], ks: &[usize]) -> Result<Vec<EvalResult>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("every k must be at least 1".into()));
    }
    let kmax = *ks.iter().max().expect("non-empty");
    let task = queries.first().map_or(Task::RowPopulation, |q| q.task);
    if queries.iter().any(|q| q.task != task) {
        return Err(Error::InvalidArgument("queries mix tasks".into()));
    }
    if let Some(q) = queries.iter().find(|q| q.gold.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "evaluation query from {:?} has no gold answers",
            q.source_table_id
        )));
    }
    let policy = setup.policy.unwrap_or_else(|| task.default_normalization());
    let per_query = setup.exec.map(queries, |q| -> Result<Vec<QueryRecord>> {
        let retrieved = setup.retrieval.search(q, kmax, setup.catalog)?;
        let ids: Vec<PartId> = retrieved.iter().map(|r| r.0).collect();
        let scores: Vec<f64> = retrieved.iter().map(|r| r.1).collect();
        let ctx = QueryContext::new(q, policy);
        let inst = Instance::prepare(&ctx, &ids, setup.catalog, setup.vocab, &setup.reader.featurizer);
        let gold = GoldSet::new(&q.gold, policy);
        let bearing: Vec<bool> = ids.iter().map(|&p| bears_answer(setup.catalog.part(p), task, &gold)).collect();
        ks.iter()
            .map(|&k| {
                let n = k.min(ids.len());
                let prefix = inst.truncated(n);
                let answers = aggregate(&prefix.readings(setup.reader, &scores[..n])?);
                let preds: Vec<&str> = answers.iter().map(|a| a.normalized.as_str()).collect();
                let first_bearing = bearing[..n].iter().position(|&b| b);
                Ok(QueryRecord {
                    source_table_id: q.source_table_id.clone(),
                    gold: q.gold.clone(),
                    top: collapse(&preds, &gold).into_iter().take(NDCG_CUTOFF).collect(),
                    reciprocal_rank: reciprocal_rank(&preds, &gold),
                    ndcg_at_10: ndcg_at_10(&preds, &gold),
                    answer_bearing_rr: first_bearing.map_or(0.0, |i| 1.0 / (i + 1) as f64),
                    answer_bearing: first_bearing.is_some(),
                    answerable: !answers.is_empty(),
                })
            })
            .collect()
    });
    let mut by_k: Vec<Vec<QueryRecord>> = vec![Vec::with_capacity(queries.len()); ks.len()];
    for recs in per_query {
        for (slot, rec) in by_k.iter_mut().zip(recs?) {
            slot.push(rec);
        }
    }
    let results: Vec<EvalResult> = ks
        .iter()
        .zip(by_k)
        .map(|(&k, records)| {
            let config = EvalConfigSnapshot {
                task,
                k,
                n_seed: queries.first().and_then(|q| q.n_seed),
                normalization: policy,
                retrieval: retrieval_name(&setup.retrieval),
                queries: queries.len(),
            };
            EvalResult::from_records(config, records)
        })
        .collect();
    let mut order: Vec<&EvalResult> = results.iter().collect();
    order.sort_by_key(|r| r.config.k);
    assert!(
        order.windows(2).all(|w| w[0].answer_bearing_recall <= w[1].answer_bearing_recall),
        "answer-bearing recall decreased with k"
    );
    Ok(results)
}

fn retrieval_name(r: &Retrieval) -> String {
    match r {
        Retrieval::Sparse(_) => "bm25".into(),
        Retrieval::Dense { tower, .. } => match tower.kind() {
            crate::dense::EncoderKind::FrozenHash => "dense_frozen_hash".into(),
            crate::dense::EncoderKind::TrainableLinear => "dense_trainable_linear".into(),
        },
    }
}

/// Retrieval-only quality at `depth`: answer-bearing MRR and recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub retrieval: String,
    pub depth: usize,
    pub answer_bearing_mrr: Metric,
    pub answer_bearing_recall: f64,
    pub per_query_rr: Vec<f64>,
}

pub fn evaluate_retrieval(
    retrieval: Retrieval,
    catalog: &PartCatalog,
    queries: &[AugmentationQuery],
    depth: usize,
    policy: Option<NormalizationPolicy>,
    exec: Execution,
) -> Result<RetrievalEval> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let rrs = exec.map(queries, |q| -> Result<f64> {
        let gold = GoldSet::new(&q.gold, policy.unwrap_or_else(|| q.task.default_normalization()));
        let hits = retrieval.search(q, depth, catalog)?;
        Ok(hits
            .iter()
            .position(|&(p, _)| bears_answer(catalog.part(p), q.task, &gold))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64))
    });
    let per_query_rr = rrs.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = per_query_rr.len().max(1) as f64;
    Ok(RetrievalEval {
        retrieval: retrieval_name(&retrieval),
        depth,
        answer_bearing_mrr: Metric::of(&per_query_rr),
        answer_bearing_recall: per_query_rr.iter().filter(|&&r| r > 0.0).count() as f64 / n,
        per_query_rr,
    })
}
