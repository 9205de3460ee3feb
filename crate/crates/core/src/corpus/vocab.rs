use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::table::{NormalizationPolicy, Table};

/// Minimum number of key-column occurrences for a string to count as an entity.
pub const ENTITY_MIN_COUNT: u32 = 3;

/// Normalized key-column strings with their occurrence counts over the
/// training split. Occurrences are counted, not distinct tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityVocab {
    pub policy: NormalizationPolicy,
    pub min_count: u32,
    pub counts: BTreeMap<String, u32>,
}

impl EntityVocab {
    pub fn build<'a>(tables: impl IntoIterator<Item = &'a Table>, policy: NormalizationPolicy, min_count: u32) -> Self {
        let mut counts = BTreeMap::new();
        for t in tables {
            for v in t.key_values() {
                let n = policy.normalize(v);
                if !n.trim().is_empty() {
                    *counts.entry(n).or_insert(0) += 1;
                }
            }
        }
        EntityVocab { policy, min_count, counts }
    }

    /// Whether the raw (unnormalized) string is an entity.
    pub fn contains(&self, raw: &str) -> bool {
        self.contains_normalized(&self.policy.normalize(raw))
    }

    pub fn contains_normalized(&self, normalized: &str) -> bool {
        self.counts.get(normalized).is_some_and(|&c| c >= self.min_count)
    }

    pub fn len(&self) -> usize {
        self.counts.values().filter(|&&c| c >= self.min_count).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::strings;

    fn keyed(id: &str, keys: &[&str]) -> Table {
        let rows = keys.iter().map(|k| strings(&[k, "x"])).collect();
        Table::new(id, "", strings(&["Name", "V"]), rows, 1).unwrap()
    }

    #[test]
    fn threshold_counts_occurrences() {
        let tables =
            vec![keyed("a", &["Ada", "Bob"]), keyed("b", &["ada", "Bob"]), keyed("c", &["Ádá", "Cy", "Cy", "Cy"])];
        let v = EntityVocab::build(&tables, NormalizationPolicy::AsciiFoldLowercase, ENTITY_MIN_COUNT);
        assert!(v.contains("ADA"), "three distinct tables");
        assert!(!v.contains("bob"), "only twice");
        assert!(v.contains("cy"), "three times inside one key column");
        assert_eq!(v.len(), 2);
    }
}
