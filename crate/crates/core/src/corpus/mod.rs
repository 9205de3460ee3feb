//! Corpus ingestion: filtering, deduplication, persistence, entity
//! vocabulary, splits, and self-supervised query generation.

mod filter;
mod store;
mod vocab;

pub use filter::{
    dedupe, filter_table, fingerprint, Deduper, FilterConfig, FilterOutcome, FilterReport, RejectReason,
    CALENDAR_DAY_FRACTION, CALENDAR_MAX_HEADER_TOKENS, FORUM_HEADERS, TEXT_BLOCK_MEDIAN_CHARS,
};
pub use store::{CorpusStore, Splits};
pub use vocab::{EntityVocab, ENTITY_MIN_COUNT};

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{make_query, AugmentationQuery, NormalizationPolicy, Table, Task};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub filter: FilterConfig,
    pub seed: u64,
    pub dev_size: usize,
    pub test_size: usize,
    pub train_sample: Option<usize>,
    pub vocab_policy: NormalizationPolicy,
    pub vocab_min_count: u32,
    /// Use this assignment instead of a seeded random split. Ids of tables
    /// that were filtered out are dropped.
    pub splits: Option<Splits>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            filter: FilterConfig::default(),
            seed: 0,
            dev_size: 0,
            test_size: 0,
            train_sample: None,
            vocab_policy: NormalizationPolicy::AsciiFoldLowercase,
            vocab_min_count: ENTITY_MIN_COUNT,
            splits: None,
        }
    }
}

/// Read a line-delimited table file. Blank lines are skipped.
pub fn read_tables(path: &Path) -> Result<Vec<Table>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            Table::from_json(l).map_err(|e| Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Filter, deduplicate, split and build the entity vocabulary.
pub fn ingest(tables: impl IntoIterator<Item = Table>, cfg: &IngestConfig) -> Result<(CorpusStore, FilterReport)> {
    let mut report = FilterReport::default();
    let mut dedup = Deduper::default();
    let mut kept = Vec::new();
    for t in tables {
        let mut outcome = filter_table(&t, t.url(), &cfg.filter);
        if outcome == FilterOutcome::Accept {
            outcome = dedup.admit(&t);
        }
        report.record(outcome);
        if outcome == FilterOutcome::Accept {
            kept.push(t);
        }
    }
    let ids: Vec<String> = kept.iter().map(|t| t.id().to_string()).collect();
    let splits = match &cfg.splits {
        Some(s) => {
            let present: HashSet<&String> = ids.iter().collect();
            let keep = |v: &[String]| v.iter().filter(|i| present.contains(i)).cloned().collect();
            Splits { train: keep(&s.train), dev: keep(&s.dev), test: keep(&s.test) }
        }
        None => Splits::assign(&ids, cfg.seed, cfg.dev_size, cfg.test_size, cfg.train_sample),
    };
    let train: HashSet<&String> = splits.train.iter().collect();
    let vocab = EntityVocab::build(
        kept.iter().filter(|t| train.contains(&t.id().to_string())),
        cfg.vocab_policy,
        cfg.vocab_min_count,
    );
    let store = CorpusStore::new(kept, splits, vocab)?;
    Ok((store, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryGenConfig {
    pub task: Task,
    pub n_seed: usize,
    pub seed: u64,
    pub max_queries: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGenReport {
    pub tables: usize,
    pub emitted: usize,
    pub skipped: usize,
}

/// Build one self-supervised query per eligible table of `split`.
///
/// Row-population queries are dropped unless some key-column value after the
/// seed rows is in the entity vocabulary. Cell filling samples one non-empty
/// cell per table uniformly with a seeded RNG.
pub fn generate_training_queries(
    store: &CorpusStore,
    split: &str,
    cfg: &QueryGenConfig,
) -> Result<(Vec<AugmentationQuery>, QueryGenReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = QueryGenReport::default();
    let mut out = Vec::new();
    for table in store.split_tables(split)? {
        if cfg.max_queries.is_some_and(|m| out.len() >= m) {
            break;
        }
        report.tables += 1;
        let query = match cfg.task {
            Task::RowPopulation => {
                let has_entity =
                    table.n_rows() > cfg.n_seed && table.key_values().skip(cfg.n_seed).any(|v| store.vocab.contains(v));
                if has_entity {
                    make_query(table, cfg.task, cfg.n_seed, None).ok()
                } else {
                    None
                }
            }
            Task::ColumnPopulation => make_query(table, cfg.task, cfg.n_seed, None).ok(),
            Task::CellFilling => {
                let cells: Vec<(usize, usize)> = table
                    .rows()
                    .iter()
                    .enumerate()
                    .flat_map(|(r, row)| {
                        row.iter().enumerate().filter(|(_, v)| !v.trim().is_empty()).map(move |(c, _)| (r, c))
                    })
                    .collect();
                if cells.is_empty() {
                    None
                } else {
                    let pick = cells[rng.random_range(0..cells.len())];
                    make_query(table, cfg.task, cfg.n_seed, Some(pick)).ok()
                }
            }
        };
        match query {
            Some(q) => {
                report.emitted += 1;
                out.push(q);
            }
            None => report.skipped += 1,
        }
    }
    Ok((out, report))
}

/// Write queries as one JSON object per line.
pub fn write_queries(path: &Path, queries: &[AugmentationQuery]) -> Result<()> {
    let mut s = String::new();
    for q in queries {
        s.push_str(&serde_json::to_string(q)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_queries(path: &Path) -> Result<Vec<AugmentationQuery>> {
    fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::strings;

    fn table(id: &str, keys: &[&str]) -> Table {
        let rows = keys
            .iter()
            .enumerate()
            .map(|(i, k)| vec![k.to_string(), format!("{id}v{i}"), format!("{id}w{i}"), format!("{id}x{i}")])
            .collect();
        Table::new(id, "cap", strings(&["Name", "A", "B", "C"]), rows, 1).unwrap()
    }

    fn store_with(tables: Vec<Table>) -> CorpusStore {
        let ids = tables.iter().map(|t| t.id().to_string()).collect();
        let cfg = IngestConfig {
            splits: Some(Splits { train: ids, dev: vec![], test: vec![] }),
            filter: FilterConfig { min_rows: 1, min_cols: 1, exclude_domains: vec![] },
            ..IngestConfig::default()
        };
        ingest(tables, &cfg).unwrap().0
    }

    #[test]
    fn row_queries_need_entities_after_seed() {
        let keys_a = ["p", "q", "r", "s", "hero", "t", "u", "v", "w", "z"];
        let store = store_with(vec![
            table("a", &keys_a),
            table("b", &["hero", "m1"]),
            table("c", &["hero", "m2", "m3"]),
            table("d", &["n1", "n2", "n3", "n4"]),
        ]);
        let cfg = QueryGenConfig { task: Task::RowPopulation, n_seed: 2, seed: 1, max_queries: None };
        let (qs, report) = generate_training_queries(&store, "train", &cfg).unwrap();
        // b: nothing to ablate; c: "m3" not an entity; d: no entities
        assert_eq!(report, QueryGenReport { tables: 4, emitted: 1, skipped: 3 });
        assert_eq!(qs[0].source_table_id.as_deref(), Some("a"));
        assert!(qs[0].gold.iter().any(|g| g == "hero"));
        assert!(qs.iter().all(|q| !q.gold.is_empty()));
    }

    #[test]
    fn cell_queries_are_seeded() {
        let store = store_with((0..20).map(|i| table(&format!("t{i}"), &["a", "b", "c", "d"])).collect());
        let cfg = QueryGenConfig { task: Task::CellFilling, n_seed: 2, seed: 9, max_queries: None };
        let (a, _) = generate_training_queries(&store, "train", &cfg).unwrap();
        let (b, _) = generate_training_queries(&store, "train", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let distinct: HashSet<_> = a.iter().map(|q| q.target_cell).collect();
        assert!(distinct.len() > 3, "16 possible targets, sampled {distinct:?}");
        let (c, _) = generate_training_queries(&store, "train", &QueryGenConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ingest_counts_every_rejection() {
        let mut tables = vec![table("ok", &["a", "b", "c", "d"])];
        tables.push(table("small", &["a", "b", "c"]));
        tables.push(table("wiki", &["a", "b", "c", "d"]).with_url(Some("https://en.wikipedia.org/x".into())));
        tables.push(table("ok", &["a", "b", "c", "d"]).with_id("dup"));
        let (store, report) = ingest(tables, &IngestConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(report.too_small, 1);
        assert_eq!(report.wikipedia_domain, 1);
        assert_eq!(report.duplicate, 1);
        assert_eq!(report.accepted + report.rejected(), report.input);
    }

    #[test]
    fn query_file_round_trip() {
        let store = store_with(vec![table("a", &["a", "b", "c", "d"])]);
        let cfg = QueryGenConfig { task: Task::ColumnPopulation, n_seed: 2, seed: 0, max_queries: None };
        let (qs, _) = generate_training_queries(&store, "train", &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.jsonl");
        write_queries(&p, &qs).unwrap();
        assert_eq!(read_queries(&p).unwrap(), qs);
    }
}
