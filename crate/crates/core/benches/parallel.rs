//! Sequential vs rayon execution of the data-parallel stages. On a one-core
//! machine both variants should measure about the same; the gap shows up
//! with more cores.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tabaug_core::catalog::PartCatalog;
use tabaug_core::dense::{gather_examples, mil_batch_loss, DenseIndex, Encoder, HnswParams, MilBatch};
use tabaug_core::sparse::{Bm25Params, SparseIndex};
use tabaug_core::synth::{generate, SynthConfig};
use tabaug_core::table::{linearize_query, make_query, Task};
use tabaug_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup() -> (PartCatalog, Vec<tabaug_core::table::AugmentationQuery>) {
    let corpus = generate(&SynthConfig { seed: 3, tables: 600, topics: 10, test_per_task: 0 }).unwrap();
    let catalog = PartCatalog::from_tables(&corpus.tables, Execution::Sequential);
    let queries =
        corpus.tables.iter().filter_map(|t| make_query(t, Task::ColumnPopulation, 2, None).ok()).take(256).collect();
    (catalog, queries)
}

fn bench(c: &mut Criterion) {
    let (catalog, queries) = setup();
    let texts: Vec<String> = queries.iter().map(linearize_query).collect();
    let encoder = Encoder::trainable(128, 1 << 16, 1);
    let sparse = SparseIndex::build(catalog.texts(), Bm25Params::default(), catalog.digest(), Execution::Sequential);
    let (examples, _) = gather_examples(&queries, &sparse, &catalog, 50, None, Execution::Sequential);
    let refs: Vec<_> = examples.iter().take(128).collect();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("encode_parts", name), &exec, |b, &exec| {
            b.iter(|| exec.map(catalog.texts(), |t| encoder.encode(t)))
        });
        g.bench_with_input(BenchmarkId::new("bm25_build", name), &exec, |b, &exec| {
            b.iter(|| SparseIndex::build(catalog.texts(), Bm25Params::default(), catalog.digest(), exec))
        });
        g.bench_with_input(BenchmarkId::new("bm25_batch_search", name), &exec, |b, &exec| {
            b.iter(|| exec.map(&texts, |t| sparse.search(t, 50)))
        });
        g.bench_with_input(BenchmarkId::new("dense_build", name), &exec, |b, &exec| {
            b.iter(|| DenseIndex::build(&encoder, catalog.texts(), HnswParams::default(), catalog.digest(), exec))
        });
        g.bench_with_input(BenchmarkId::new("mil_batch_loss_and_grad", name), &exec, |b, &exec| {
            let batch = MilBatch::new(&refs, &encoder, &encoder, &catalog, exec);
            b.iter(|| mil_batch_loss(&encoder, &encoder, &batch, true, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
