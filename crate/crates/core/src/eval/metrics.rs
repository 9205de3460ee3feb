//! Ranking metrics over normalized predictions. Duplicate predictions (after
//! normalization) are collapsed to their first occurrence.

use std::collections::HashSet;

use crate::evidence::GoldSet;

pub const NDCG_CUTOFF: usize = 10;

/// Normalize with the gold set's policy and drop repeats.
pub fn collapse<S: AsRef<str>>(ranked: &[S], gold: &GoldSet) -> Vec<String> {
    let mut seen = HashSet::new();
    ranked.iter().map(|s| gold.policy.normalize(s.as_ref())).filter(|s| seen.insert(s.clone())).collect()
}

/// 1/rank of the first gold prediction over the full list; 0 if none.
pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], gold: &GoldSet) -> f64 {
    collapse(ranked, gold).iter().position(|p| gold.contains_normalized(p)).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Binary-gain NDCG over the top ten; the ideal list has
/// `min(|gold|, 10)` relevant entries.
pub fn ndcg_at_10<S: AsRef<str>>(ranked: &[S], gold: &GoldSet) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = collapse(ranked, gold)
        .iter()
        .take(NDCG_CUTOFF)
        .enumerate()
        .filter(|(_, p)| gold.contains_normalized(p))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..gold.len().min(NDCG_CUTOFF)).map(discount).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}
