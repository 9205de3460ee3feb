//! On-disk corpus: line-delimited table records plus a binary offset index,
//! the split assignment and the entity vocabulary.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::EntityVocab;
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::table::Table;

const TABLES_FILE: &str = "tables.jsonl";
const INDEX_FILE: &str = "tables.idx";
const SPLITS_FILE: &str = "splits.json";
const VOCAB_FILE: &str = "vocab.json";
const INDEX_MAGIC: &[u8; 8] = b"TAUGTIDX";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }

    /// Seeded shuffle, then dev and test take the first slices and the
    /// remainder (optionally capped at `train_sample`) is train.
    pub fn assign(ids: &[String], seed: u64, dev_size: usize, test_size: usize, train_sample: Option<usize>) -> Self {
        let mut ids = ids.to_vec();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let dev_end = dev_size.min(ids.len());
        let test_end = (dev_end + test_size).min(ids.len());
        let mut train: Vec<String> = ids[test_end..].to_vec();
        if let Some(n) = train_sample {
            train.truncate(n);
        }
        Splits { dev: ids[..dev_end].to_vec(), test: ids[dev_end..test_end].to_vec(), train }
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for id in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::InvalidArgument(format!("table {id:?} is in more than one split")));
            }
        }
        Ok(())
    }
}

/// An immutable table corpus.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    data: String,
    spans: Vec<(usize, usize)>,
    tables: Vec<Table>,
    by_id: HashMap<String, usize>,
    pub splits: Splits,
    pub vocab: EntityVocab,
}

impl CorpusStore {
    /// Assemble a store from accepted tables. Ids must be unique and every
    /// split id must refer to a stored table.
    pub fn new(tables: Vec<Table>, splits: Splits, vocab: EntityVocab) -> Result<Self> {
        let mut data = String::new();
        let mut spans = Vec::with_capacity(tables.len());
        let mut by_id = HashMap::with_capacity(tables.len());
        for (i, t) in tables.iter().enumerate() {
            if by_id.insert(t.id().to_string(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate table id {:?}", t.id())));
            }
            let line = t.to_json();
            spans.push((data.len(), line.len()));
            data.push_str(&line);
            data.push('\n');
        }
        splits.check_disjoint()?;
        for id in splits.train.iter().chain(&splits.dev).chain(&splits.test) {
            if !by_id.contains_key(id) {
                return Err(Error::InvalidArgument(format!("split refers to unknown table {id:?}")));
            }
        }
        Ok(CorpusStore { data, spans, tables, by_id, splits, vocab })
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn get(&self, id: &str) -> Option<&Table> {
        self.by_id.get(id).map(|&i| &self.tables[i])
    }

    /// The stored record line, byte-for-byte.
    pub fn raw_record(&self, id: &str) -> Option<&str> {
        self.by_id.get(id).map(|&i| {
            let (off, len) = self.spans[i];
            &self.data[off..off + len]
        })
    }

    /// Tables of a split, in split order.
    pub fn split_tables(&self, split: &str) -> Result<Vec<&Table>> {
        Ok(self.splits.get(split)?.iter().map(|id| &self.tables[self.by_id[id]]).collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(TABLES_FILE), &self.data)?;
        let mut w =
            BinWriter::new(BufWriter::new(fs::File::create(dir.join(INDEX_FILE))?), INDEX_MAGIC, INDEX_VERSION)?;
        w.usize(self.spans.len())?;
        for &(off, len) in &self.spans {
            w.usize(off)?;
            w.usize(len)?;
        }
        w.finish()?;
        fs::write(dir.join(SPLITS_FILE), serde_json::to_string_pretty(&self.splits)?)?;
        fs::write(dir.join(VOCAB_FILE), serde_json::to_string_pretty(&self.vocab)?)?;
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let data = fs::read_to_string(dir.join(TABLES_FILE))?;
        let idx = fs::read(dir.join(INDEX_FILE))?;
        let (mut r, version) = BinReader::open(&idx[..], INDEX_MAGIC, "table index")?;
        if version != INDEX_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let n = r.usize()?;
        let mut spans = Vec::with_capacity(n.min(1 << 24));
        let mut tables = Vec::with_capacity(n.min(1 << 24));
        let mut by_id = HashMap::with_capacity(n.min(1 << 24));
        for i in 0..n {
            let off = r.usize()?;
            let len = r.usize()?;
            let line = data.get(off..off + len).ok_or_else(|| r.err(format!("record {i} out of bounds")))?;
            let t = Table::from_json(line)?;
            by_id.insert(t.id().to_string(), i);
            tables.push(t);
            spans.push((off, len));
        }
        r.finish()?;
        let splits: Splits = serde_json::from_str(&fs::read_to_string(dir.join(SPLITS_FILE))?)?;
        let vocab: EntityVocab = serde_json::from_str(&fs::read_to_string(dir.join(VOCAB_FILE))?)?;
        splits.check_disjoint()?;
        Ok(CorpusStore { data, spans, tables, by_id, splits, vocab })
    }
}
