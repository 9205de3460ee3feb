use proptest::prelude::*;

use tabaug_core::catalog::{PartCatalog, PartId};
use tabaug_core::dense::{mil_loss_from_scores, DenseIndex, Encoder, HnswParams};
use tabaug_core::evidence::GoldSet;
use tabaug_core::reader::{aggregate, reader_loss, score_part, CandidateOccurrence, FieldKind, PartReading};
use tabaug_core::sparse::{Bm25Params, SparseIndex};
use tabaug_core::table::{make_query, NormalizationPolicy, Table, Task, EMPTY_CELL};
use tabaug_core::Execution;

fn reading(part: PartId, r: f64, strings: &[String], logits: &[f64]) -> PartReading {
    PartReading {
        part,
        retrieval_score: r,
        occurrences: strings
            .iter()
            .map(|s| CandidateOccurrence {
                part_id: part,
                span: (0, s.len()),
                surface: s.clone(),
                normalized: s.clone(),
                field_kind: FieldKind::Cell,
                row: Some(0),
                col: 0,
            })
            .collect(),
        occurrence_probs: if logits.is_empty() { Vec::new() } else { score_part(logits).unwrap() },
    }
}

fn part_strategy() -> impl Strategy<Value = (f64, Vec<(String, f64)>)> {
    (-10.0..10.0f64, prop::collection::vec(("[a-e]", -5.0..5.0f64), 1..5))
}

fn readings(parts: &[(f64, Vec<(String, f64)>)]) -> Vec<PartReading> {
    parts
        .iter()
        .enumerate()
        .map(|(j, (r, occ))| {
            let strings: Vec<String> = occ.iter().map(|o| o.0.clone()).collect();
            let logits: Vec<f64> = occ.iter().map(|o| o.1).collect();
            reading(j as PartId, *r, &strings, &logits)
        })
        .collect()
}

fn tables(n: usize, seed: u64) -> Vec<Table> {
    // a tiny vocabulary makes lexical overlap between tables common
    let words = ["red", "blue", "album", "year", "label", "rock", "pop", "band", "city", "river"];
    (0..n)
        .map(|i| {
            let pick = |k: usize| words[(seed as usize + i * 7 + k * 3) % words.len()].to_string();
            let headers = (0..4).map(|c| format!("{}{c}", pick(c))).collect();
            let rows = (0..5).map(|r| (0..4).map(|c| format!("{}{}", pick(r + c), (i + r) % 3)).collect()).collect();
            Table::new(format!("t{i}"), pick(9), headers, rows, 1).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregate_is_order_invariant(parts in prop::collection::vec(part_strategy(), 1..6)) {
        let rs = readings(&parts);
        let mut reversed = rs.clone();
        reversed.reverse();
        let a = aggregate(&rs);
        let b = aggregate(&reversed);
        prop_assert_eq!(a.len(), b.len());
        for x in &a {
            let y = b.iter().find(|y| y.normalized == x.normalized).unwrap();
            prop_assert!((x.score - y.score).abs() < 1e-12);
        }
        let total: f64 = a.iter().map(|x| x.score).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn answers_are_sorted_and_loss_is_nonnegative(parts in prop::collection::vec(part_strategy(), 1..6), g in "[a-e]") {
        let a = aggregate(&readings(&parts));
        prop_assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
        let gold = GoldSet::new(&[g], NormalizationPolicy::None);
        if let Some(l) = reader_loss(&a, &gold) {
            prop_assert!(l >= 0.0 && l.is_finite());
        }
    }

    #[test]
    fn mil_loss_is_nonnegative_and_gradient_sums_to_zero(
        scores in prop::collection::vec(-20.0..20.0f64, 2..10),
        mask in prop::collection::vec(any::<bool>(), 10),
    ) {
        let mut positive: Vec<bool> = mask[..scores.len()].to_vec();
        positive[0] = true;
        let (loss, grad) = mil_loss_from_scores(&scores, &positive);
        prop_assert!(loss >= -1e-12);
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn dense_search_never_returns_the_excluded_table(seed in 0u64..1000, k in 1usize..30, excluded in 0usize..12) {
        let ts = tables(12, seed);
        let catalog = PartCatalog::from_tables(&ts, Execution::Sequential);
        let enc = Encoder::trainable(16, 1 << 10, seed);
        let index = DenseIndex::build(&enc, catalog.texts(), HnswParams::default(), catalog.digest(), Execution::Sequential);
        let own = catalog.parts_of_table(&format!("t{excluded}"));
        let q = enc.encode(catalog.text(0));
        let hits = index.search(&q, k, |p| !own.contains(&p)).unwrap();
        prop_assert_eq!(hits.len(), k.min(catalog.len() - own.len()));
        prop_assert!(hits.iter().all(|h| !own.contains(&h.0)));
        prop_assert!(hits.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        // a beam as wide as the index is exact
        let exact = index.exact_search(&q, k, |p| !own.contains(&p)).unwrap();
        let wide = index.search_with_ef(&q, k, catalog.len(), |p| !own.contains(&p)).unwrap();
        prop_assert_eq!(exact, wide);
    }

    #[test]
    fn sparse_filtered_search_respects_the_filter(seed in 0u64..1000, k in 1usize..20) {
        let ts = tables(10, seed);
        let catalog = PartCatalog::from_tables(&ts, Execution::Sequential);
        let idx = SparseIndex::build(catalog.texts(), Bm25Params::default(), catalog.digest(), Execution::Sequential);
        let own = catalog.parts_of_table("t0");
        let hits = idx.search_filtered(catalog.text(0), k, |p| !own.contains(&p));
        prop_assert!(hits.len() <= k);
        prop_assert!(hits.iter().all(|h| !own.contains(&h.0) && h.1 > 0.0));
        let all = idx.search(catalog.text(0), catalog.len());
        let expected: Vec<_> = all.into_iter().filter(|h| !own.contains(&h.0)).take(k).collect();
        prop_assert_eq!(hits, expected);
    }
}

#[test]
fn parallel_and_sequential_builds_agree() {
    let ts = tables(40, 3);
    let seq = PartCatalog::from_tables(&ts, Execution::Sequential);
    let par = PartCatalog::from_tables(&ts, Execution::default());
    assert_eq!(seq.texts(), par.texts());
    let enc = Encoder::trainable(8, 1 << 10, 1);
    let a = DenseIndex::build(&enc, seq.texts(), HnswParams::default(), seq.digest(), Execution::Sequential);
    let b = DenseIndex::build(&enc, par.texts(), HnswParams::default(), par.digest(), Execution::default());
    let dir = tempfile::tempdir().unwrap();
    a.save(&dir.path().join("a")).unwrap();
    b.save(&dir.path().join("b")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("a")).unwrap(), std::fs::read(dir.path().join("b")).unwrap());
    let sa = SparseIndex::build(seq.texts(), Bm25Params::default(), seq.digest(), Execution::Sequential);
    let sb = SparseIndex::build(par.texts(), Bm25Params::default(), par.digest(), Execution::default());
    sa.save(&dir.path().join("sa")).unwrap();
    sb.save(&dir.path().join("sb")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("sa")).unwrap(), std::fs::read(dir.path().join("sb")).unwrap());
}

#[test]
fn saved_indexes_round_trip() {
    let ts = tables(15, 9);
    let catalog = PartCatalog::from_tables(&ts, Execution::Sequential);
    let enc = Encoder::trainable(8, 1 << 10, 2);
    let dense =
        DenseIndex::build(&enc, catalog.texts(), HnswParams::default(), catalog.digest(), Execution::Sequential);
    let sparse = SparseIndex::build(catalog.texts(), Bm25Params::default(), catalog.digest(), Execution::Sequential);
    let dir = tempfile::tempdir().unwrap();
    dense.save(&dir.path().join("d")).unwrap();
    sparse.save(&dir.path().join("s")).unwrap();
    let dense2 = DenseIndex::load(&dir.path().join("d")).unwrap();
    let sparse2 = SparseIndex::load(&dir.path().join("s")).unwrap();
    let q = enc.encode("album year");
    assert_eq!(dense.search(&q, 5, |_| true).unwrap(), dense2.search(&q, 5, |_| true).unwrap());
    assert_eq!(sparse.search("album year", 5), sparse2.search("album year", 5));
    assert_eq!(dense2.catalog_digest, catalog.digest());
}

#[test]
fn ablated_queries_hide_their_gold() {
    let t = &tables(1, 4)[0];
    let row = make_query(t, Task::RowPopulation, 2, None).unwrap();
    assert_eq!(row.table.n_rows(), 2);
    let col = make_query(t, Task::ColumnPopulation, 2, None).unwrap();
    assert_eq!(col.table.headers(), &t.headers()[..2]);
    for g in &col.gold {
        assert!(!col.table.headers().contains(g));
    }
    let cell = make_query(t, Task::CellFilling, 2, Some((1, 2))).unwrap();
    assert_eq!(cell.gold, vec![t.rows()[1][2].clone()]);
    assert_eq!(cell.table.rows()[1][2], EMPTY_CELL);
}
