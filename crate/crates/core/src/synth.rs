//! Planted-answer corpus generator.
//!
//! The corpus is built from triplets of tables sharing a topic:
//!
//! * **query table** `Q`: captioned with the topic's canonical words;
//! * **evidence table** `E`: captioned with the topic's alias words, holding
//!   the query's gold answers (and nowhere else in the corpus);
//! * **decoy table** `D`: identical to `E` wherever the ablated query can see
//!   it, with every gold answer swapped for a same-shape decoy and a caption
//!   of fresh words.
//!
//! Lexically, `E` and `D` are tied for the query, so keyword retrieval and
//! untrained hashing cannot separate them. The decoy caption is fresh rather
//! than borrowed from another topic: queries ablated for a different task
//! than the triplet's can find their gold in `D` too, and training on those
//! must not tie one topic's canonical caption to another's. A retriever has to learn that a
//! topic's canonical and alias captions belong together.
//!
//! Triplets cycle through row population, column population and cell
//! filling. Query tables of the first `test_per_task` triplets of each kind
//! form the test split; everything else is train.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Splits;
use crate::error::{Error, Result};
use crate::table::{make_query, AugmentationQuery, Table, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Triplets are added until at least this many tables exist.
    pub tables: usize,
    pub topics: usize,
    pub test_per_task: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 7, tables: 5000, topics: 40, test_per_task: 100 }
    }
}

pub const QUERY_ROWS: usize = 6;
pub const QUERY_COLS: usize = 5;
pub const N_SEED: usize = 2;
/// Rows of evidence and decoy tables.
const EVIDENCE_ROWS: usize = 18;

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// In corpus order.
    pub tables: Vec<Table>,
    pub splits: Splits,
    /// Evaluation queries over the test split, per task.
    pub test_queries: BTreeMap<Task, Vec<AugmentationQuery>>,
}

struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Words {
    const ONSETS: [&'static str; 16] =
        ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
    const VOWELS: [&'static str; 5] = ["a", "e", "i", "o", "u"];

    /// A fresh word of three syllables, never returned before.
    fn fresh(&mut self) -> String {
        loop {
            let w: String = (0..3)
                .map(|_| {
                    let o = Self::ONSETS[self.rng.random_range(0..Self::ONSETS.len())];
                    let v = Self::VOWELS[self.rng.random_range(0..Self::VOWELS.len())];
                    format!("{o}{v}")
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn fresh_n(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

struct Topic {
    canonical: String,
    alias: String,
}

fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

/// A 6×5 grid of fresh words; column 0 is the key.
fn grid(words: &mut Words) -> Vec<Vec<String>> {
    (0..QUERY_ROWS).map(|_| words.fresh_n(QUERY_COLS)).collect()
}

fn table(id: String, caption: &str, headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Table> {
    Table::new(id, caption, headers, rows, 1)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.topics < 2 {
        return Err(Error::InvalidArgument("at least two topics are needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words { rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5757), used: HashSet::new() };
    let topics: Vec<Topic> = (0..cfg.topics)
        .map(|_| Topic {
            canonical: format!("{} {}", capitalized(&words.fresh()), words.fresh()),
            alias: format!("{} {}", capitalized(&words.fresh()), words.fresh()),
        })
        .collect();
    let mut tables = Vec::new();
    let mut splits = Splits::default();
    let mut test_queries: BTreeMap<Task, Vec<AugmentationQuery>> = BTreeMap::new();
    let mut per_kind = [0usize; 3];
    let mut n = 0usize;
    while tables.len() < cfg.tables {
        let kind = n % 3;
        let task = Task::ALL[kind];
        let topic = rng.random_range(0..cfg.topics);
        let headers: Vec<String> = words.fresh_n(QUERY_COLS).iter().map(|h| capitalized(h)).collect();
        let rows = grid(&mut words);
        let (qid, eid, did) = (format!("t{n:05}q"), format!("t{n:05}e"), format!("t{n:05}d"));
        let canonical = &topics[topic].canonical;
        let alias = &topics[topic].alias;
        let decoy_caption = &format!("{} {}", capitalized(&words.fresh()), words.fresh());
        let q = table(qid.clone(), canonical, headers.clone(), rows.clone())?;
        let mut target = None;
        let (evidence, decoy) = match task {
            Task::RowPopulation => {
                // parts: [seed_a, gold, gold] with seed rows alternating
                let mut decoy_keys: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
                for k in decoy_keys.iter_mut().skip(N_SEED) {
                    *k = words.fresh();
                }
                let layout = |keys: &[String]| -> Vec<Vec<String>> {
                    let mut out = Vec::with_capacity(EVIDENCE_ROWS);
                    for p in 0..EVIDENCE_ROWS / 3 {
                        let seed = p % 2;
                        let golds = [2 + 2 * seed, 3 + 2 * seed];
                        for r in [seed, golds[0], golds[1]] {
                            let mut row = rows[r].clone();
                            row[0] = keys[r].clone();
                            out.push(row);
                        }
                    }
                    out
                };
                let keys: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
                (
                    table(eid.clone(), alias, headers.clone(), layout(&keys))?,
                    table(did.clone(), decoy_caption, headers.clone(), layout(&decoy_keys))?,
                )
            }
            Task::ColumnPopulation => {
                let e_rows: Vec<Vec<String>> = (0..EVIDENCE_ROWS).map(|i| rows[i % QUERY_ROWS].clone()).collect();
                let mut d_headers = headers.clone();
                for h in d_headers.iter_mut().skip(N_SEED) {
                    *h = capitalized(&words.fresh());
                }
                let fresh_tail: Vec<Vec<String>> =
                    (0..QUERY_ROWS).map(|_| words.fresh_n(QUERY_COLS - N_SEED)).collect();
                let d_rows: Vec<Vec<String>> = (0..EVIDENCE_ROWS)
                    .map(|i| {
                        let mut row = rows[i % QUERY_ROWS][..N_SEED].to_vec();
                        row.extend(fresh_tail[i % QUERY_ROWS].iter().cloned());
                        row
                    })
                    .collect();
                (
                    table(eid.clone(), alias, headers.clone(), e_rows)?,
                    table(did.clone(), decoy_caption, d_headers, d_rows)?,
                )
            }
            Task::CellFilling => {
                let tr = rng.random_range(0..QUERY_ROWS);
                let tc = rng.random_range(1..QUERY_COLS);
                target = Some((tr, tc));
                let others: Vec<usize> = (0..QUERY_ROWS).filter(|&r| r != tr).collect();
                let mut cycle = others.iter().cycle();
                let mut e_rows = Vec::with_capacity(EVIDENCE_ROWS);
                for _ in 0..EVIDENCE_ROWS / 3 {
                    e_rows.push(rows[tr].clone());
                    e_rows.push(rows[*cycle.next().expect("cycle")].clone());
                    e_rows.push(rows[*cycle.next().expect("cycle")].clone());
                }
                let decoy_value = words.fresh();
                let d_rows: Vec<Vec<String>> = e_rows
                    .iter()
                    .map(|row| {
                        let mut row = row.clone();
                        if row == rows[tr] {
                            row[tc] = decoy_value.clone();
                        }
                        row
                    })
                    .collect();
                (
                    table(eid.clone(), alias, headers.clone(), e_rows)?,
                    table(did.clone(), decoy_caption, headers.clone(), d_rows)?,
                )
            }
        };
        let is_test = per_kind[kind] < cfg.test_per_task;
        per_kind[kind] += 1;
        if is_test {
            let query = make_query(&q, task, N_SEED, target)?;
            test_queries.entry(task).or_default().push(query);
            splits.test.push(qid);
        } else {
            splits.train.push(qid);
        }
        let mut pair = [evidence, decoy];
        pair.shuffle(&mut rng);
        splits.train.extend(pair.iter().map(|t| t.id().to_string()));
        tables.push(q);
        tables.extend(pair);
        n += 1;
    }
    tables.shuffle(&mut rng);
    let order: BTreeMap<&str, usize> = tables.iter().enumerate().map(|(i, t)| (t.id(), i)).collect();
    splits.train.sort_by_key(|id| order[id.as_str()]);
    splits.test.sort_by_key(|id| order[id.as_str()]);
    Ok(SynthCorpus { tables, splits, test_queries })
}
