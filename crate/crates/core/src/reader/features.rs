//! Occurrence featurizer. Each occurrence becomes a sparse vector of hashed
//! named features; the reader's logit is a dot product with it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::candidates::{CandidateOccurrence, FieldKind};
use crate::hashing::{bucket, feature_hash, SparseVec};
use crate::table::{AugmentationQuery, NormalizationPolicy, TablePart, Task};
use crate::text::tokenize;

pub const DEFAULT_FEATURE_BUCKETS: usize = 1 << 16;
const POSITION_BUCKETS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub buckets: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { buckets: DEFAULT_FEATURE_BUCKETS }
    }
}

/// Everything about the query the featurizer needs, computed once.
#[derive(Debug, Clone)]
pub struct QueryContext {
    pub task: Task,
    pub policy: NormalizationPolicy,
    values: HashSet<String>,
    tokens: HashSet<String>,
    headers: HashSet<String>,
    header_tokens: Vec<String>,
    target_header: Option<String>,
    /// Normalized cells of each query row (the target row alone for cell
    /// filling, with the target cell left out).
    rows: Vec<HashSet<String>>,
}

impl QueryContext {
    pub fn new(query: &AugmentationQuery, policy: NormalizationPolicy) -> Self {
        let t = &query.table;
        let norm = |s: &str| policy.normalize(s);
        let mut values: HashSet<String> = t.headers().iter().map(|h| norm(h)).collect();
        let mut tokens: HashSet<String> = tokenize(t.caption()).into_iter().collect();
        for h in t.headers() {
            tokens.extend(tokenize(h));
        }
        let target = query.target_cell.filter(|_| query.task == Task::CellFilling);
        let mut rows = Vec::new();
        for (r, row) in t.rows().iter().enumerate() {
            let mut set = HashSet::new();
            for (c, v) in row.iter().enumerate() {
                if target == Some((r, c)) {
                    continue;
                }
                values.insert(norm(v));
                tokens.extend(tokenize(v));
                set.insert(norm(v));
            }
            if target.is_none_or(|(tr, _)| tr == r) {
                rows.push(set);
            }
        }
        values.remove("");
        let mut header_tokens: Vec<String> = t.headers().iter().flat_map(|h| tokenize(h)).collect();
        header_tokens.sort();
        header_tokens.dedup();
        QueryContext {
            task: query.task,
            policy,
            values,
            tokens,
            headers: t.headers().iter().map(|h| h.to_lowercase()).collect(),
            header_tokens,
            target_header: query.target_header().map(str::to_lowercase),
            rows,
        }
    }
}

struct Builder {
    buckets: usize,
    kind: &'static str,
    pairs: Vec<(u32, f64)>,
}

impl Builder {
    fn add(&mut self, name: &str, value: f64) {
        if value != 0.0 {
            self.pairs.push((bucket(feature_hash(&[name, self.kind]), self.buckets), value));
        }
    }

    fn add_parts(&mut self, parts: &[&str], value: f64) {
        if value != 0.0 {
            self.pairs.push((bucket(feature_hash(parts), self.buckets), value));
        }
    }
}

/// Feature vector of one occurrence in the part retrieved at `rank` (0-based).
pub fn featurize(
    cfg: &FeaturizerConfig,
    ctx: &QueryContext,
    part: &TablePart,
    occ: &CandidateOccurrence,
    rank: usize,
) -> SparseVec {
    let kind = occ.field_kind.name();
    let mut b = Builder { buckets: cfg.buckets, kind, pairs: Vec::with_capacity(16) };
    b.add("bias", 1.0);
    b.add("in_query", f64::from(u8::from(ctx.values.contains(&occ.normalized))));
    let toks = tokenize(&occ.surface);
    if !toks.is_empty() {
        let seen = toks.iter().filter(|t| ctx.tokens.contains(*t)).count();
        b.add("token_overlap", seen as f64 / toks.len() as f64);
    }
    let col_header = part.headers[occ.col].to_lowercase();
    if occ.field_kind != FieldKind::Header {
        b.add("header_in_query", f64::from(u8::from(ctx.headers.contains(&col_header))));
        if let Some(target) = &ctx.target_header {
            b.add("header_is_target", f64::from(u8::from(*target == col_header)));
        }
        if let Some(row) = occ.row {
            let others: Vec<String> = part.rows[row]
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != occ.col)
                .map(|(_, v)| ctx.policy.normalize(v))
                .filter(|v| !v.is_empty())
                .collect();
            if !others.is_empty() {
                let best =
                    ctx.rows.iter().map(|set| others.iter().filter(|v| set.contains(*v)).count()).max().unwrap_or(0);
                b.add("row_overlap", best as f64 / others.len() as f64);
            }
        }
    } else {
        b.add("is_key_header", f64::from(u8::from(occ.col + 1 == part.key_col)));
    }
    let col = occ.col.min(POSITION_BUCKETS - 1).to_string();
    b.add_parts(&["column", &col, kind], 1.0);
    let rank = rank.min(POSITION_BUCKETS - 1).to_string();
    b.add_parts(&["rank", &rank, kind], 1.0);
    if !ctx.header_tokens.is_empty() {
        let w = 1.0 / (ctx.header_tokens.len() as f64).sqrt();
        for t in &ctx.header_tokens {
            b.add_parts(&["cross", &occ.normalized, t], w);
        }
    }
    SparseVec::from_pairs(b.pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityVocab;
    use crate::reader::candidates::extract_candidates;
    use crate::table::{chunk_table, make_query, strings, Linearization, Table};

    #[test]
    fn target_column_and_row_features_fire() {
        let t = Table::new(
            "q",
            "",
            strings(&["Album", "Released"]),
            vec![strings(&["The Wall", "1979"]), strings(&["Animals", "1977"])],
            1,
        )
        .unwrap();
        let q = make_query(&t, Task::CellFilling, 0, Some((0, 1))).unwrap();
        let ctx = QueryContext::new(&q, NormalizationPolicy::None);
        let part = chunk_table(&t.clone().with_id("other"), 3).remove(0);
        let lin = Linearization::of_part(&part);
        let occs =
            extract_candidates(&part, 0, &lin, Task::CellFilling, &EntityVocab::default(), NormalizationPolicy::None);
        let cfg = FeaturizerConfig::default();
        let f = |name: &str, kind: &str| bucket(feature_hash(&[name, kind]), cfg.buckets);
        let year = featurize(&cfg, &ctx, &part, &occs[1], 0);
        let get = |v: &SparseVec, i: u32| v.iter().find(|p| p.0 == i).map_or(0.0, |p| p.1);
        assert_eq!(get(&year, f("header_is_target", "cell")), 1.0);
        assert_eq!(get(&year, f("row_overlap", "cell")), 1.0);
        let other_year = featurize(&cfg, &ctx, &part, &occs[3], 0);
        assert_eq!(get(&other_year, f("row_overlap", "cell")), 0.0);
        let album = featurize(&cfg, &ctx, &part, &occs[0], 0);
        assert_eq!(get(&album, f("header_is_target", "key_cell")), 0.0);
        assert_eq!(get(&album, f("in_query", "key_cell")), 1.0);
    }
}
