//! Part vectors plus an HNSW graph over them, with exact search as fallback.
//!
//! Parts with bit-identical vectors (repeated rows, copied tables) share one
//! graph node. Clusters of exact duplicates otherwise crowd each other out of
//! neighbor lists and strand the beam, and tied copies are interchangeable
//! anyway. A search expands every node it returns into its parts.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::encoder::{dot, Encoder};
use super::hnsw::{Hnsw, HnswParams};
use crate::binio::{BinReader, BinWriter};
use crate::catalog::PartId;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sparse::rank_top_k;

const MAGIC: &[u8; 8] = b"TAUGDENS";
const VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    /// Row-major `nodes × dim`, distinct vectors in first-occurrence order.
    vectors: Vec<f64>,
    /// Part id → graph node.
    node_of: Vec<u32>,
    /// Graph node → its parts, ascending.
    members: Vec<Vec<PartId>>,
    graph: Hnsw,
    pub catalog_digest: u64,
}

fn members_of(node_of: &[u32], nodes: usize) -> Vec<Vec<PartId>> {
    let mut members = vec![Vec::new(); nodes];
    for (part, &node) in node_of.iter().enumerate() {
        members[node as usize].push(part as PartId);
    }
    members
}

impl DenseIndex {
    /// Encode every part text with the context tower and build the graph.
    pub fn build(
        context: &Encoder,
        texts: &[String],
        params: HnswParams,
        catalog_digest: u64,
        exec: Execution,
    ) -> Self {
        let rows = exec.map(texts, |t| context.encode(t));
        let vectors: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_vectors(context.dim(), vectors, params, catalog_digest)
    }

    pub fn from_vectors(dim: usize, vectors: Vec<f64>, params: HnswParams, catalog_digest: u64) -> Self {
        assert!(dim > 0 && vectors.len().is_multiple_of(dim), "vector matrix shape");
        let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut unique = Vec::new();
        let mut node_of = Vec::with_capacity(vectors.len() / dim);
        for v in vectors.chunks_exact(dim) {
            let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            let next = seen.len() as u32;
            let node = *seen.entry(key).or_insert_with(|| {
                unique.extend_from_slice(v);
                next
            });
            node_of.push(node);
        }
        let graph = Hnsw::build(&unique, dim, params);
        let members = members_of(&node_of, graph.len());
        DenseIndex { dim, vectors: unique, node_of, members, graph, catalog_digest }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.node_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of.is_empty()
    }

    /// Number of distinct vectors, i.e. graph nodes.
    pub fn distinct(&self) -> usize {
        self.members.len()
    }

    pub fn vector(&self, id: PartId) -> &[f64] {
        let i = self.node_of[id as usize] as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn graph(&self) -> &Hnsw {
        &self.graph
    }

    pub fn params(&self) -> HnswParams {
        self.graph.params
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { left: q.len(), right: self.dim });
        }
        Ok(())
    }

    /// Brute-force top-`k` over accepted parts.
    pub fn exact_search(&self, q: &[f64], k: usize, keep: impl Fn(PartId) -> bool) -> Result<Vec<(PartId, f64)>> {
        self.check_dim(q)?;
        let mut all: Vec<(PartId, f64)> =
            (0..self.len() as PartId).filter(|&i| keep(i)).map(|i| (i, dot(q, self.vector(i)))).collect();
        rank_top_k(&mut all, k);
        Ok(all)
    }

    /// Approximate top-`k` over accepted parts. Fetches `2k` nodes, expands
    /// and filters them, and doubles the fetch until `k` parts survive. A
    /// beam as wide as the graph falls back to exact search.
    pub fn search(&self, q: &[f64], k: usize, keep: impl Fn(PartId) -> bool) -> Result<Vec<(PartId, f64)>> {
        self.search_with_ef(q, k, self.graph.params.ef_search, keep)
    }

    pub fn search_with_ef(
        &self,
        q: &[f64],
        k: usize,
        ef: usize,
        keep: impl Fn(PartId) -> bool,
    ) -> Result<Vec<(PartId, f64)>> {
        self.check_dim(q)?;
        let nodes = self.distinct();
        if k == 0 || nodes == 0 {
            return Ok(Vec::new());
        }
        let mut fetch = (2 * k).min(nodes);
        loop {
            let beam = ef.max(fetch);
            if beam >= nodes {
                return self.exact_search(q, k, keep);
            }
            let mut hits: Vec<(PartId, f64)> = self
                .graph
                .search(&self.vectors, self.dim, q, fetch, beam)
                .into_iter()
                .flat_map(|(node, s)| self.members[node as usize].iter().map(move |&p| (p, s)))
                .filter(|&(id, _)| keep(id))
                .collect();
            if hits.len() >= k || fetch >= nodes {
                rank_top_k(&mut hits, k);
                return Ok(hits);
            }
            fetch = (fetch * 2).min(nodes);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(fs::File::create(path)?), MAGIC, VERSION)?;
        w.u64(self.catalog_digest)?;
        w.usize(self.dim)?;
        w.f64s(&self.vectors)?;
        w.u32s(&self.node_of)?;
        self.graph.write_to(&mut w)?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let (mut r, version) = BinReader::open(&bytes[..], MAGIC, "dense index")?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let catalog_digest = r.u64()?;
        let dim = r.usize()?;
        let vectors = r.f64s()?;
        if dim == 0 || vectors.len() % dim != 0 {
            return Err(r.err("vector matrix shape".into()));
        }
        let node_of = r.u32s()?;
        let graph = Hnsw::read_from(&mut r)?;
        let nodes = vectors.len() / dim;
        if graph.len() != nodes {
            return Err(r.err("graph size differs from vector count".into()));
        }
        if node_of.iter().any(|&n| n as usize >= nodes) {
            return Err(r.err("part refers to unknown vector".into()));
        }
        let members = members_of(&node_of, nodes);
        if members.iter().any(Vec::is_empty) {
            return Err(r.err("vector without a part".into()));
        }
        r.finish()?;
        Ok(DenseIndex { dim, vectors, node_of, members, graph, catalog_digest })
    }
}
