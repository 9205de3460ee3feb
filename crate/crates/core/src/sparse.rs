//! Okapi BM25 over table-part linearizations.
//!
//! score(q, d) = Σ_{t ∈ q} qtf(t) · idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t) = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::catalog::PartId;
use crate::error::Result;
use crate::par::Execution;
use crate::text::tokenize;

const MAGIC: &[u8; 8] = b"TAUGBM25";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn idf(&self, n_docs: usize, df: usize) -> f64 {
        let (n, df) = (n_docs as f64, df as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_weight(&self, tf: u32, doc_len: u32, avg_len: f64) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.b + self.b * f64::from(doc_len) / avg_len;
        tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    pub params: Bm25Params,
    /// Digest of the part catalog the index was built over.
    pub catalog_digest: u64,
    terms: Vec<String>,
    postings: Vec<Vec<(PartId, u32)>>,
    doc_lens: Vec<u32>,
    lookup: HashMap<String, usize>,
}

/// Unique query terms in sorted order with their query frequencies.
pub fn query_terms(text: &str) -> BTreeMap<String, u32> {
    let mut q = BTreeMap::new();
    for t in tokenize(text) {
        *q.entry(t).or_insert(0) += 1;
    }
    q
}

impl SparseIndex {
    pub fn build(texts: &[String], params: Bm25Params, catalog_digest: u64, exec: Execution) -> Self {
        let tokenized = exec.map(texts, |t| tokenize(t));
        let mut by_term: BTreeMap<&str, Vec<(PartId, u32)>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(texts.len());
        for (doc, toks) in tokenized.iter().enumerate() {
            doc_lens.push(toks.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, n) in tf {
                by_term.entry(t).or_default().push((doc as PartId, n));
            }
        }
        let (terms, postings): (Vec<String>, Vec<_>) = by_term.into_iter().map(|(t, p)| (t.to_string(), p)).unzip();
        Self::assemble(params, catalog_digest, terms, postings, doc_lens)
    }

    fn assemble(
        params: Bm25Params,
        catalog_digest: u64,
        terms: Vec<String>,
        postings: Vec<Vec<(PartId, u32)>>,
        doc_lens: Vec<u32>,
    ) -> Self {
        let lookup = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        SparseIndex { params, catalog_digest, terms, postings, doc_lens, lookup }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn doc_len(&self, id: PartId) -> u32 {
        self.doc_lens[id as usize]
    }

    pub fn avg_len(&self) -> f64 {
        if self.doc_lens.is_empty() {
            return 0.0;
        }
        self.doc_lens.iter().map(|&l| f64::from(l)).sum::<f64>() / self.doc_lens.len() as f64
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn postings(&self, term: &str) -> &[(PartId, u32)] {
        self.lookup.get(term).map_or(&[], |&i| &self.postings[i])
    }

    /// Top-`k` parts, by descending score then ascending part id.
    pub fn search(&self, query_text: &str, k: usize) -> Vec<(PartId, f64)> {
        self.search_filtered(query_text, k, |_| true)
    }

    /// Like [`search`](Self::search) but only parts accepted by `keep` are ranked.
    pub fn search_filtered(&self, query_text: &str, k: usize, keep: impl Fn(PartId) -> bool) -> Vec<(PartId, f64)> {
        if k == 0 || self.doc_lens.is_empty() {
            return Vec::new();
        }
        let n = self.n_docs();
        let avg = self.avg_len();
        let mut scores = vec![0.0f64; n];
        let mut touched = vec![false; n];
        let mut hits = Vec::new();
        for (term, qtf) in query_terms(query_text) {
            let postings = self.postings(&term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.params.idf(n, postings.len());
            for &(doc, tf) in postings {
                let d = doc as usize;
                scores[d] += f64::from(qtf) * idf * self.params.term_weight(tf, self.doc_lens[d], avg);
                if !touched[d] {
                    touched[d] = true;
                    hits.push(doc);
                }
            }
        }
        let mut ranked: Vec<(PartId, f64)> =
            hits.into_iter().filter(|&d| keep(d)).map(|d| (d, scores[d as usize])).collect();
        rank_top_k(&mut ranked, k);
        ranked
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(fs::File::create(path)?), MAGIC, VERSION)?;
        w.f64(self.params.k1)?;
        w.f64(self.params.b)?;
        w.u64(self.catalog_digest)?;
        w.u32s(&self.doc_lens)?;
        w.usize(self.terms.len())?;
        for (t, p) in self.terms.iter().zip(&self.postings) {
            w.str(t)?;
            let flat: Vec<u32> = p.iter().flat_map(|&(d, tf)| [d, tf]).collect();
            w.u32s(&flat)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let (mut r, version) = BinReader::open(&bytes[..], MAGIC, "sparse index")?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let params = Bm25Params { k1: r.f64()?, b: r.f64()? };
        let catalog_digest = r.u64()?;
        let doc_lens = r.u32s()?;
        let n_terms = r.usize()?;
        let mut terms = Vec::with_capacity(n_terms.min(1 << 24));
        let mut postings = Vec::with_capacity(n_terms.min(1 << 24));
        for _ in 0..n_terms {
            terms.push(r.str()?);
            let flat = r.u32s()?;
            if flat.len() % 2 != 0 {
                return Err(r.err("odd postings payload".into()));
            }
            let p: Vec<(PartId, u32)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            if p.iter().any(|&(d, _)| d as usize >= doc_lens.len()) {
                return Err(r.err("posting refers to unknown part".into()));
            }
            postings.push(p);
        }
        r.finish()?;
        Ok(Self::assemble(params, catalog_digest, terms, postings, doc_lens))
    }
}

/// Sort by descending score, ties by ascending id, and keep the first `k`.
pub fn rank_top_k(ranked: &mut Vec<(PartId, f64)>, k: usize) {
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(docs: &[&str]) -> SparseIndex {
        let texts: Vec<String> = docs.iter().map(|s| s.to_string()).collect();
        SparseIndex::build(&texts, Bm25Params::default(), 0, Execution::Sequential)
    }

    #[test]
    fn single_part_found() {
        let idx = index(&["Pink Floyd [SEP] Band : Floyd * |"]);
        let hits = idx.search("floyd", 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn empty_index_and_oov() {
        let idx = index(&[]);
        assert!(idx.search("anything", 5).is_empty());
        let idx = index(&["alpha beta", "gamma"]);
        assert!(idx.search("zeta omega", 5).is_empty());
        assert!(idx.search("alpha", 0).is_empty());
    }

    #[test]
    fn k_larger_than_corpus() {
        let idx = index(&["a b", "a c", "a d"]);
        assert_eq!(idx.search("a", 100).len(), 3);
    }

    #[test]
    fn shorter_doc_with_repeated_term_ranks_first() {
        // doc0: 4 tokens, "wall" once; doc1: 3 tokens, "wall" twice
        let idx = index(&["wall x y z", "wall wall q"]);
        let hits = idx.search("wall", 2);
        assert_eq!(hits[0].0, 1);
        // df=2, N=2: idf = ln(1 + 0.5/2.5) = ln 1.2; avgdl = 3.5
        let idf = 1.2f64.ln();
        let w = |tf: f64, dl: f64| tf * 1.9 / (tf + 0.9 * (0.6 + 0.4 * dl / 3.5));
        assert!((hits[0].1 - idf * w(2.0, 3.0)).abs() < 1e-12);
        assert!((hits[1].1 - idf * w(1.0, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_three_document_table() {
        let idx = index(&["the wall 1979", "animals 1977", "the final cut 1983 the"]);
        // N=3, lens 3,2,5, avgdl=10/3
        let avg = 10.0 / 3.0;
        let idf = |df: f64| (1.0 + (3.0 - df + 0.5) / (df + 0.5)).ln();
        let w = |tf: f64, dl: f64| tf * 1.9 / (tf + 0.9 * (0.6 + 0.4 * dl / avg));
        let hits = idx.search("the wall", 3);
        let s0 = idf(2.0) * w(1.0, 3.0) + idf(1.0) * w(1.0, 3.0);
        let s2 = idf(2.0) * w(2.0, 5.0);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, 0);
        assert!((hits[0].1 - s0).abs() < 1e-12);
        assert_eq!(hits[1].0, 2);
        assert!((hits[1].1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ties_break_on_part_id() {
        let idx = index(&["x a", "x b", "x c"]);
        let ids: Vec<_> = idx.search("x", 3).iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn persistence_is_byte_identical() {
        let idx = index(&["the wall 1979", "animals 1977", "the final cut"]);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.bm25"), dir.path().join("b.bm25"));
        idx.save(&a).unwrap();
        let back = SparseIndex::load(&a).unwrap();
        assert_eq!(back, idx);
        back.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
