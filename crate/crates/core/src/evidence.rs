//! Answer-bearing containment: does a table-part contain a gold answer in a
//! field the task could extract it from?

use std::collections::HashSet;

use crate::catalog::{PartCatalog, PartId};
use crate::table::{NormalizationPolicy, TablePart, Task};

/// Normalized, non-empty gold strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    pub policy: NormalizationPolicy,
    normalized: HashSet<String>,
}

impl GoldSet {
    pub fn new<'a>(gold: impl IntoIterator<Item = &'a String>, policy: NormalizationPolicy) -> Self {
        let normalized = gold.into_iter().map(|g| policy.normalize(g)).filter(|g| !g.is_empty()).collect();
        GoldSet { policy, normalized }
    }

    pub fn contains_normalized(&self, s: &str) -> bool {
        self.normalized.contains(s)
    }

    pub fn contains_raw(&self, raw: &str) -> bool {
        self.normalized.contains(&self.policy.normalize(raw))
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

/// Column population looks at headers; the other tasks at every cell. Row
/// population reads any column because the reader's entity candidates may
/// come from any column.
pub fn bears_answer(part: &TablePart, task: Task, gold: &GoldSet) -> bool {
    match task {
        Task::ColumnPopulation => part.headers.iter().any(|h| gold.contains_raw(h)),
        Task::RowPopulation | Task::CellFilling => part.rows.iter().flatten().any(|c| gold.contains_raw(c)),
    }
}

/// Retrieved parts split into answer-bearing positives and hard negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalExample {
    pub query_text: String,
    pub source_table_id: Option<String>,
    pub positives: Vec<PartId>,
    pub hard_negatives: Vec<PartId>,
}

impl RetrievalExample {
    /// All retrieved parts: positives then hard negatives.
    pub fn retrieved(&self) -> impl Iterator<Item = (PartId, bool)> + '_ {
        self.positives.iter().map(|&p| (p, true)).chain(self.hard_negatives.iter().map(|&p| (p, false)))
    }
}

/// Partition `retrieved` into positives and negatives, dropping parts from
/// the query's own source table. `None` when no part bears an answer.
pub fn build_answer_bearing_sets(
    query_text: String,
    task: Task,
    gold: &GoldSet,
    source_table_id: Option<&str>,
    retrieved: &[PartId],
    catalog: &PartCatalog,
) -> Option<RetrievalExample> {
    let mut positives = Vec::new();
    let mut hard_negatives = Vec::new();
    for &p in retrieved {
        if source_table_id.is_some_and(|s| catalog.source_of(p) == s) {
            continue;
        }
        if bears_answer(catalog.part(p), task, gold) {
            positives.push(p);
        } else {
            hard_negatives.push(p);
        }
    }
    if positives.is_empty() {
        return None;
    }
    Some(RetrievalExample {
        query_text,
        source_table_id: source_table_id.map(str::to_string),
        positives,
        hard_negatives,
    })
}

/// 1/rank of the first answer-bearing part, 0 when none.
pub fn answer_bearing_rr(parts: &[&TablePart], task: Task, gold: &GoldSet) -> f64 {
    parts.iter().position(|p| bears_answer(p, task, gold)).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}
