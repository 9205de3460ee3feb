//! `tabaug`: command-line driver for every pipeline stage, and the server.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use tabaug_core::catalog::PartCatalog;
use tabaug_core::corpus::{
    generate_training_queries, ingest, read_queries, read_tables, write_queries, CorpusStore, FilterConfig,
    IngestConfig, QueryGenConfig, Splits,
};
use tabaug_core::dense::{
    gather_examples, train_retriever, DenseIndex, EncoderConfig, EncoderKind, HnswParams, Retriever,
    RetrieverTrainConfig,
};
use tabaug_core::eval::{evaluate, evaluate_retrieval, EvalSetup};
use tabaug_core::experiment::{self, ExperimentConfig};
use tabaug_core::pipeline::Retrieval;
use tabaug_core::reader::{train_reader_e2e, ReaderModel, ReaderTrainConfig};
use tabaug_core::sparse::{Bm25Params, SparseIndex};
use tabaug_core::synth::{self, SynthConfig};
use tabaug_core::table::{Table, Task};
use tabaug_core::Execution;
use tabaug_service::api::serving_query;
use tabaug_service::wire::{round6, AnswerOut};
use tabaug_service::{router, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "tabaug", version, about = "Retrieval-based table augmentation")]
struct Cli {
    /// Run every batch loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, deduplicate and split raw tables into a corpus store.
    Ingest {
        /// Line-delimited table files.
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        min_rows: usize,
        #[arg(long, default_value_t = 4)]
        min_cols: usize,
        #[arg(long = "exclude-domain", default_values_t = vec!["wikipedia".to_string()])]
        exclude_domains: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        dev_size: usize,
        #[arg(long, default_value_t = 0)]
        test_size: usize,
        /// Keep at most this many training tables.
        #[arg(long)]
        train_sample: Option<usize>,
        /// Fixed split assignment (JSON with train/dev/test id lists).
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Ablate tables of a split into self-supervised queries.
    MakeQueries {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 2)]
        n_seed: usize,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_queries: Option<usize>,
    },
    /// Build the BM25 index over the parts of a split.
    BuildSparse {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = 0.9)]
        k1: f64,
        #[arg(long, default_value_t = 0.4)]
        b: f64,
    },
    /// Keyword search over a sparse index.
    SparseSearch {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        query: String,
        #[arg(short, default_value_t = 50)]
        k: usize,
    },
    /// Train the two-tower retriever on BM25-mined answer-bearing parts.
    TrainRetriever {
        #[arg(long, num_args = 1.., required = true)]
        queries: Vec<PathBuf>,
        #[arg(long)]
        sparse_index: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = RetrieverTrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = RetrieverTrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = RetrieverTrainConfig::default().lr)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// BM25 depth searched for positives and hard negatives.
        #[arg(long, default_value_t = 50)]
        depth: usize,
        #[arg(long, default_value_t = EncoderConfig::default().dim)]
        dim: usize,
        #[arg(long, default_value_t = EncoderConfig::default().hash_buckets)]
        buckets: usize,
        /// `frozen-hash` writes the untrained baseline and skips training.
        #[arg(long, default_value = "trainable")]
        encoder: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every part with the context tower and build the HNSW index.
    BuildDense {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = HnswParams::default().m)]
        m: usize,
        #[arg(long, default_value_t = HnswParams::default().ef_construction)]
        ef_construction: usize,
        #[arg(long, default_value_t = HnswParams::default().ef_search)]
        ef_search: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a task reader end to end, fine-tuning the query tower.
    TrainReader {
        #[arg(long)]
        retriever: PathBuf,
        #[arg(long)]
        dense_index: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        queries: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
        #[arg(long, default_value_t = ReaderTrainConfig::default().lr)]
        lr: f64,
        #[arg(long, default_value_t = ReaderTrainConfig::default().query_lr)]
        query_lr: f64,
        #[arg(long, default_value_t = ReaderTrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the pipeline on held-out queries and write a report.
    Evaluate {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        store: PathBuf,
        /// Split the queries come from (ignored with --queries).
        #[arg(long, default_value = "test")]
        split: String,
        /// Split the indexes were built over.
        #[arg(long, default_value = "train")]
        index_split: String,
        #[arg(long)]
        reader: PathBuf,
        #[arg(long)]
        dense_index: PathBuf,
        /// Also report answer-bearing retrieval metrics of this retriever.
        #[arg(long)]
        retriever: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        n_seed: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Augment one table with the artifacts named in a service config.
    Augment {
        #[arg(long, env = "TABAUG_CONFIG")]
        config: PathBuf,
        #[arg(long)]
        task: Task,
        /// A table record (the first record of a line-delimited file).
        #[arg(long)]
        table: PathBuf,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        n_seed: Option<usize>,
        /// 0-based target row for cell filling.
        #[arg(long, requires = "target_col")]
        target_row: Option<usize>,
        #[arg(long, requires = "target_row")]
        target_col: Option<usize>,
        /// Answers as JSON lines; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, env = "TABAUG_CONFIG")]
        config: PathBuf,
        /// Overrides the config and TABAUG_BIND.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write a planted-answer corpus: tables, splits and test queries.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().tables)]
        tables: usize,
        #[arg(long, default_value_t = SynthConfig::default().topics)]
        topics: usize,
        #[arg(long, default_value_t = SynthConfig::default().test_per_task)]
        test_per_task: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
    /// Run the whole pipeline in memory on a planted corpus and print the report.
    Experiment {
        #[arg(long, default_value_t = SynthConfig::default().tables)]
        tables: usize,
        #[arg(long, default_value_t = SynthConfig::default().test_per_task)]
        test_per_task: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn open_store(path: &Path) -> Result<CorpusStore> {
    CorpusStore::open(path).with_context(|| format!("opening store {}", path.display()))
}

fn catalog(store: &CorpusStore, split: &str, exec: Execution) -> Result<PartCatalog> {
    Ok(PartCatalog::from_store(store, split, exec)?)
}

fn read_one_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim();
    // a pretty-printed record or the first line of a record file
    if let Ok(t) = Table::from_json(trimmed) {
        return Ok(t);
    }
    let first = trimmed.lines().find(|l| !l.trim().is_empty()).context("table file is empty")?;
    Ok(Table::from_json(first)?)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Ingest {
            input,
            out,
            min_rows,
            min_cols,
            exclude_domains,
            seed,
            dev_size,
            test_size,
            train_sample,
            splits,
        } => {
            let mut tables = Vec::new();
            for p in &input {
                tables.extend(read_tables(p)?);
            }
            let splits: Option<Splits> = match splits {
                Some(p) => Some(serde_json::from_str(&fs::read_to_string(&p)?)?),
                None => None,
            };
            let cfg = IngestConfig {
                filter: FilterConfig { min_rows, min_cols, exclude_domains },
                seed,
                dev_size,
                test_size,
                train_sample,
                splits,
                ..Default::default()
            };
            let (store, report) = ingest(tables, &cfg)?;
            store.save(&out)?;
            print_json(&report)
        }
        Command::MakeQueries { store, task, n_seed, split, out, seed, max_queries } => {
            let store = open_store(&store)?;
            let cfg = QueryGenConfig { task, n_seed, seed, max_queries };
            let (queries, report) = generate_training_queries(&store, &split, &cfg)?;
            write_queries(&out, &queries)?;
            print_json(&report)
        }
        Command::BuildSparse { store, out, split, k1, b } => {
            let store = open_store(&store)?;
            let cat = catalog(&store, &split, exec)?;
            let idx = SparseIndex::build(cat.texts(), Bm25Params { k1, b }, cat.digest(), exec);
            idx.save(&out)?;
            print_json(&serde_json::json!({
                "parts": idx.n_docs(),
                "vocabulary": idx.vocabulary_size(),
            }))
        }
        Command::SparseSearch { index, store, split, query, k } => {
            let idx = SparseIndex::load(&index)?;
            let store = open_store(&store)?;
            let cat = catalog(&store, &split, exec)?;
            if idx.catalog_digest != cat.digest() {
                bail!("sparse index was built over a different catalog");
            }
            for (rank, (id, score)) in idx.search(&query, k).into_iter().enumerate() {
                print_json(&serde_json::json!({
                    "rank": rank + 1,
                    "part_id": cat.part(id).part_id(),
                    "score": round6(score),
                }))?;
            }
            Ok(())
        }
        Command::TrainRetriever {
            queries,
            sparse_index,
            store,
            split,
            epochs,
            batch,
            lr,
            seed,
            depth,
            dim,
            buckets,
            encoder,
            out,
        } => {
            let kind = match encoder.as_str() {
                "trainable" => EncoderKind::TrainableLinear,
                "frozen-hash" => EncoderKind::FrozenHash,
                other => bail!("unknown encoder {other:?}; expected trainable or frozen-hash"),
            };
            let mut retriever = Retriever::new(EncoderConfig { kind, dim, hash_buckets: buckets }, seed)?;
            if kind == EncoderKind::FrozenHash {
                retriever.save(&out)?;
                return print_json(&serde_json::json!({ "encoder": "frozen-hash", "trained": false }));
            }
            let store = open_store(&store)?;
            let cat = catalog(&store, &split, exec)?;
            let sparse = SparseIndex::load(&sparse_index)?;
            if sparse.catalog_digest != cat.digest() {
                bail!("sparse index was built over a different catalog");
            }
            let mut all = Vec::new();
            for p in &queries {
                all.extend(read_queries(p)?);
            }
            let (examples, skipped) = gather_examples(&all, &sparse, &cat, depth, None, exec);
            let cfg = RetrieverTrainConfig { batch_size: batch, epochs, lr, seed, ..Default::default() };
            let Retriever { query, context } = &mut retriever;
            let report = train_retriever(query, context, &examples, &cat, &cfg, exec)?;
            retriever.save(&out)?;
            print_json(&serde_json::json!({ "skipped_queries": skipped, "training": report }))
        }
        Command::BuildDense { model, store, split, m, ef_construction, ef_search, out } => {
            let retriever = Retriever::load(&model)?;
            let store = open_store(&store)?;
            let cat = catalog(&store, &split, exec)?;
            let params = HnswParams { m, ef_construction, ef_search, ..Default::default() };
            let idx = DenseIndex::build(&retriever.context, cat.texts(), params, cat.digest(), exec);
            idx.save(&out)?;
            print_json(&serde_json::json!({ "parts": idx.len(), "dim": idx.dim() }))
        }
        Command::TrainReader {
            retriever,
            dense_index,
            store,
            split,
            queries,
            k,
            epochs,
            lr,
            query_lr,
            batch,
            seed,
            out,
        } => {
            let retriever = Retriever::load(&retriever)?;
            let index = DenseIndex::load(&dense_index)?;
            let store = open_store(&store)?;
            let cat = catalog(&store, &split, exec)?;
            if index.catalog_digest != cat.digest() {
                bail!("dense index was built over a different catalog");
            }
            let queries = read_queries(&queries)?;
            let mut tower = retriever.query;
            let mut reader = ReaderModel::new(Default::default());
            let cfg = ReaderTrainConfig { k, epochs, lr, query_lr, batch_size: batch, seed, ..Default::default() };
            let report = train_reader_e2e(&mut reader, &mut tower, &index, &cat, &store.vocab, &queries, &cfg, exec)?;
            reader.save(&tower, &out)?;
            print_json(&report)
        }
        Command::Evaluate {
            task,
            store,
            split,
            index_split,
            reader,
            dense_index,
            retriever,
            queries,
            n_seed,
            seed,
            k,
            report,
        } => {
            let store = open_store(&store)?;
            let cat = catalog(&store, &index_split, exec)?;
            let index = DenseIndex::load(&dense_index)?;
            if index.catalog_digest != cat.digest() {
                bail!("dense index was built over a different catalog");
            }
            let (reader, tower) = ReaderModel::load(&reader)?;
            let queries = match queries {
                Some(p) => read_queries(&p)?,
                None => {
                    let cfg = QueryGenConfig { task, n_seed, seed, max_queries: None };
                    generate_training_queries(&store, &split, &cfg)?.0
                }
            };
            if let Some(q) = queries.iter().find(|q| q.task != task) {
                bail!("query for {} in a {task} evaluation", q.task);
            }
            let setup = EvalSetup {
                catalog: &cat,
                vocab: &store.vocab,
                retrieval: Retrieval::Dense { index: &index, tower: &tower },
                reader: &reader,
                policy: None,
                exec,
            };
            let result = evaluate(&setup, &queries, k)?;
            let retrieval = match retriever {
                Some(p) => {
                    let r = Retriever::load(&p)?;
                    let dense = Retrieval::Dense { index: &index, tower: &r.query };
                    Some(evaluate_retrieval(dense, &cat, &queries, k, None, exec)?)
                }
                None => None,
            };
            write_json(&report, &serde_json::json!({ "evaluation": result, "retriever": retrieval }))?;
            print_json(&serde_json::json!({
                "task": task,
                "queries": queries.len(),
                "k": k,
                "mrr": round6(result.mrr.mean),
                "ndcg_at_10": round6(result.ndcg_at_10.mean),
                "answer_bearing_recall": round6(result.answer_bearing_recall),
            }))
        }
        Command::Augment { config, task, table, k, n_seed, target_row, target_col, out } => {
            let cfg = ServiceConfig::from_env(Some(&config))?;
            let state = AppState::load(&cfg)?;
            let target = target_row.zip(target_col);
            let query = serving_query(read_one_table(&table)?, task, n_seed, target)?;
            let k = k.unwrap_or(state.default_k);
            let result = state.system.augment(&query, k)?;
            let mut text = String::new();
            for a in &result.answers {
                text.push_str(&serde_json::to_string(&AnswerOut::new(a, &state.system.catalog))?);
                text.push('\n');
            }
            match out {
                Some(p) => fs::write(&p, text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            if result.unanswerable {
                eprintln!("{}", serde_json::json!({ "warning": "no supported answer", "k": k }));
            }
            Ok(())
        }
        Command::Serve { config, bind } => {
            let mut cfg = ServiceConfig::from_env(Some(&config))?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let state = Arc::new(AppState::load(&cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener =
                    tokio::net::TcpListener::bind(&cfg.bind).await.with_context(|| format!("binding {}", cfg.bind))?;
                eprintln!("{}", serde_json::json!({ "listening": listener.local_addr()?.to_string() }));
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok(())
            })
        }
        Command::Synth { out, tables, topics, test_per_task, seed } => {
            let corpus = synth::generate(&SynthConfig { seed, tables, topics, test_per_task })?;
            fs::create_dir_all(&out)?;
            let mut text = String::new();
            for t in &corpus.tables {
                text.push_str(&t.to_json());
                text.push('\n');
            }
            fs::write(out.join("tables.jsonl"), text)?;
            write_json(&out.join("splits.json"), &corpus.splits)?;
            for (task, qs) in &corpus.test_queries {
                write_queries(&out.join(format!("test-{}.jsonl", task.short())), qs)?;
            }
            print_json(&serde_json::json!({ "tables": corpus.tables.len() }))
        }
        Command::Experiment { tables, test_per_task, out } => {
            let mut cfg = ExperimentConfig::default();
            cfg.synth.tables = tables;
            cfg.synth.test_per_task = test_per_task;
            let (report, _) = experiment::run(&cfg, exec)?;
            for (stage, secs) in &report.timings {
                eprintln!("{}", serde_json::json!({ "stage": stage, "seconds": round6(*secs) }));
            }
            match out {
                Some(p) => write_json(&p, &report),
                None => print_json(&report),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            eprintln!("{}", serde_json::json!({ "error": e.to_string(), "causes": chain }));
            ExitCode::FAILURE
        }
    }
}
