//! The ordered set of indexed table-parts. Part ordinals (`PartId`) are
//! positions in this catalog and are shared by every index built over it.

use std::collections::HashMap;
use std::ops::Range;

use sha2::{Digest, Sha256};

use crate::corpus::CorpusStore;
use crate::error::Result;
use crate::par::Execution;
use crate::table::{chunk_table, linearize_part, Table, TablePart, PART_ROWS};

pub type PartId = u32;

#[derive(Debug, Clone)]
pub struct PartCatalog {
    parts: Vec<TablePart>,
    texts: Vec<String>,
    by_table: HashMap<String, Range<PartId>>,
    digest: u64,
}

impl PartCatalog {
    pub fn from_tables<'a>(tables: impl IntoIterator<Item = &'a Table>, exec: Execution) -> Self {
        let mut parts = Vec::new();
        let mut by_table = HashMap::new();
        for t in tables {
            let start = parts.len() as PartId;
            parts.extend(chunk_table(t, PART_ROWS));
            by_table.insert(t.id().to_string(), start..parts.len() as PartId);
        }
        let texts = exec.map(&parts, linearize_part);
        let mut h = Sha256::new();
        for (p, text) in parts.iter().zip(&texts) {
            h.update(p.part_id().as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        let digest = u64::from_le_bytes(h.finalize()[..8].try_into().unwrap());
        PartCatalog { parts, texts, by_table, digest }
    }

    /// Catalog over one split of a store.
    pub fn from_store(store: &CorpusStore, split: &str, exec: Execution) -> Result<Self> {
        Ok(Self::from_tables(store.split_tables(split)?, exec))
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part(&self, id: PartId) -> &TablePart {
        &self.parts[id as usize]
    }

    pub fn parts(&self) -> &[TablePart] {
        &self.parts
    }

    pub fn text(&self, id: PartId) -> &str {
        &self.texts[id as usize]
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    /// Ordinals of the parts cut from `table_id`, if it is indexed.
    pub fn parts_of_table(&self, table_id: &str) -> Range<PartId> {
        self.by_table.get(table_id).cloned().unwrap_or(0..0)
    }

    pub fn source_of(&self, id: PartId) -> &str {
        &self.parts[id as usize].source_table_id
    }

    /// Content digest; indexes record it so mismatched artifacts are caught
    /// at load time.
    pub fn digest(&self) -> u64 {
        self.digest
    }
}
