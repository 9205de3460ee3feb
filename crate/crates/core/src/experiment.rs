//! The full training and evaluation pipeline on a planted corpus, run in
//! memory: ingest → BM25 → retriever training → dense index → per-task
//! reader training → evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::PartCatalog;
use crate::corpus::{generate_training_queries, ingest, CorpusStore, IngestConfig, QueryGenConfig};
use crate::dense::{
    gather_examples, train_retriever, DenseIndex, Encoder, EncoderConfig, HnswParams, Retriever, RetrieverTrainConfig,
    RetrieverTrainReport,
};
use crate::error::Result;
use crate::eval::{evaluate_retrieval, sweep_k, EvalResult, EvalSetup, RetrievalEval};
use crate::par::Execution;
use crate::pipeline::Retrieval;
use crate::reader::{train_reader_e2e, ReaderModel, ReaderTrainConfig, ReaderTrainReport};
use crate::sparse::{Bm25Params, SparseIndex};
use crate::synth::{generate, SynthConfig, N_SEED};
use crate::table::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub bm25_depth: usize,
    /// Training queries per task, taken in corpus order.
    pub max_train_queries: Option<usize>,
    pub retriever: RetrieverTrainConfig,
    pub reader: ReaderTrainConfig,
    pub hnsw: HnswParams,
    /// Depths evaluated for every task.
    pub ks: Vec<usize>,
    /// Depth for retrieval-only comparisons.
    pub retrieval_depth: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            encoder: EncoderConfig::default(),
            seed: 11,
            bm25_depth: 50,
            max_train_queries: None,
            retriever: RetrieverTrainConfig::default(),
            reader: ReaderTrainConfig::default(),
            hnsw: HnswParams::default(),
            ks: vec![1, 2, 5, 10, 20],
            retrieval_depth: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub reader_training: ReaderTrainReport,
    /// One result per configured depth.
    pub sweep: Vec<EvalResult>,
    pub bm25: RetrievalEval,
    pub frozen_hash: RetrievalEval,
    /// The retriever after retrieval training, before end-to-end updates.
    pub trained: RetrievalEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tables: usize,
    pub parts: usize,
    pub retriever_examples: usize,
    pub retriever_skipped: usize,
    pub retriever_training: RetrieverTrainReport,
    pub tasks: BTreeMap<Task, TaskOutcome>,
    /// Wall-clock seconds per stage; excluded from determinism checks.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

/// Artifacts produced along the way, for inspection and persistence tests.
pub struct ExperimentArtifacts {
    pub store: CorpusStore,
    pub catalog: PartCatalog,
    pub sparse: SparseIndex,
    pub retriever: Retriever,
    pub dense: DenseIndex,
    pub readers: BTreeMap<Task, (ReaderModel, Encoder)>,
}

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<(ExperimentReport, ExperimentArtifacts)> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let corpus = generate(&cfg.synth)?;
    let ingest_cfg = IngestConfig { splits: Some(corpus.splits.clone()), seed: cfg.seed, ..Default::default() };
    let (store, _) = ingest(corpus.tables, &ingest_cfg)?;
    let catalog = PartCatalog::from_store(&store, "train", exec)?;
    let sparse = SparseIndex::build(catalog.texts(), Bm25Params::default(), catalog.digest(), exec);
    lap("corpus", &mut timings);

    let mut train_queries = BTreeMap::new();
    for task in Task::ALL {
        let qcfg = QueryGenConfig { task, n_seed: N_SEED, seed: cfg.seed, max_queries: None };
        let mut qs = generate_training_queries(&store, "train", &qcfg)?.0;
        qs.truncate(cfg.max_train_queries.unwrap_or(usize::MAX));
        train_queries.insert(task, qs);
    }
    let all: Vec<_> = train_queries.values().flatten().cloned().collect();
    let (examples, skipped) = gather_examples(&all, &sparse, &catalog, cfg.bm25_depth, None, exec);
    lap("bm25 examples", &mut timings);

    let mut retriever = Retriever::new(cfg.encoder, cfg.seed)?;
    let retriever_training = {
        let Retriever { query, context } = &mut retriever;
        train_retriever(query, context, &examples, &catalog, &cfg.retriever, exec)?
    };
    lap("retriever training", &mut timings);

    let dense = DenseIndex::build(&retriever.context, catalog.texts(), cfg.hnsw, catalog.digest(), exec);
    let frozen = Encoder::frozen_hash(cfg.encoder.dim);
    let frozen_index = DenseIndex::build(&frozen, catalog.texts(), cfg.hnsw, catalog.digest(), exec);
    lap("dense indexes", &mut timings);

    let mut tasks = BTreeMap::new();
    let mut readers = BTreeMap::new();
    for task in Task::ALL {
        let mut reader = ReaderModel::new(Default::default());
        let mut tower = retriever.query.clone();
        let reader_training = train_reader_e2e(
            &mut reader,
            &mut tower,
            &dense,
            &catalog,
            &store.vocab,
            &train_queries[&task],
            &cfg.reader,
            exec,
        )?;
        lap(&format!("{} reader training", task.short()), &mut timings);
        let test = &corpus.test_queries[&task];
        let setup = EvalSetup {
            catalog: &catalog,
            vocab: &store.vocab,
            retrieval: Retrieval::Dense { index: &dense, tower: &tower },
            reader: &reader,
            policy: None,
            exec,
        };
        let sweep = sweep_k(&setup, test, &cfg.ks)?;
        let depth = cfg.retrieval_depth;
        let outcome = TaskOutcome {
            reader_training,
            sweep,
            bm25: evaluate_retrieval(Retrieval::Sparse(&sparse), &catalog, test, depth, None, exec)?,
            frozen_hash: evaluate_retrieval(
                Retrieval::Dense { index: &frozen_index, tower: &frozen },
                &catalog,
                test,
                depth,
                None,
                exec,
            )?,
            trained: evaluate_retrieval(
                Retrieval::Dense { index: &dense, tower: &retriever.query },
                &catalog,
                test,
                depth,
                None,
                exec,
            )?,
        };
        lap(&format!("{} evaluation", task.short()), &mut timings);
        tasks.insert(task, outcome);
        readers.insert(task, (reader, tower));
    }
    let report = ExperimentReport {
        tables: store.len(),
        parts: catalog.len(),
        retriever_examples: examples.len(),
        retriever_skipped: skipped,
        retriever_training,
        tasks,
        timings,
    };
    Ok((report, ExperimentArtifacts { store, catalog, sparse, retriever, dense, readers }))
}
