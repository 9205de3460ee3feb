#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub const TOY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/tables.jsonl");
pub const SEED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/pink_floyd_seed.json");

pub fn tabaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabaug"))
        .args(args)
        .env_remove("TABAUG_CONFIG")
        .env_remove("TABAUG_BIND")
        .output()
        .expect("spawn tabaug")
}

pub fn ok(args: &[&str]) -> String {
    let out = tabaug(args);
    assert!(out.status.success(), "tabaug {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub const CONFIG: &str = r#"
store = "store"
sparse_index = "sparse.bin"

[tasks.row_population]
dense_index = "dense.bin"
reader = "reader-row.bin"

[tasks.column_population]
dense_index = "dense.bin"
reader = "reader-col.bin"

[tasks.cell_filling]
dense_index = "dense.bin"
reader = "reader-cell.bin"
"#;

/// Every stage of the pipeline on the toy corpus, writing into `dir`.
pub fn build_pipeline(dir: &Path) {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    ok(&["ingest", "--input", TOY, "--out", &p("store"), "--seed", "1", "--test-size", "4"]);
    for task in ["row", "col", "cell"] {
        ok(&[
            "make-queries",
            "--store",
            &p("store"),
            "--task",
            task,
            "--n-seed",
            "2",
            "--out",
            &p(&format!("q-{task}.jsonl")),
        ]);
    }
    ok(&["build-sparse", "--store", &p("store"), "--out", &p("sparse.bin")]);
    ok(&[
        "train-retriever",
        "--queries",
        &p("q-row.jsonl"),
        &p("q-col.jsonl"),
        &p("q-cell.jsonl"),
        "--sparse-index",
        &p("sparse.bin"),
        "--store",
        &p("store"),
        "--epochs",
        "3",
        "--seed",
        "1",
        "--buckets",
        "16384",
        "--out",
        &p("retriever.bin"),
    ]);
    ok(&["build-dense", "--model", &p("retriever.bin"), "--store", &p("store"), "--out", &p("dense.bin")]);
    for task in ["row", "col", "cell"] {
        ok(&[
            "train-reader",
            "--retriever",
            &p("retriever.bin"),
            "--dense-index",
            &p("dense.bin"),
            "--store",
            &p("store"),
            "--queries",
            &p(&format!("q-{task}.jsonl")),
            "-k",
            "5",
            "--epochs",
            "2",
            "--seed",
            "1",
            "--out",
            &p(&format!("reader-{task}.bin")),
        ]);
    }
    std::fs::write(dir.join("config.toml"), CONFIG).unwrap();
}

/// Toy artifacts shared by every test in one test binary.
pub fn toy_artifacts() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        build_pipeline(&dir);
        dir
    })
}
