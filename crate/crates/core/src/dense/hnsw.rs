//! Hierarchical navigable small-world graph for maximum inner-product search.
//!
//! Insertion order and level draws are fixed by the seed, so rebuilding from
//! the same vectors gives the same graph.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::dot;
use crate::binio::{BinReader, BinWriter};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams { m: 16, ef_construction: 200, ef_search: 128, seed: 0x5eed }
    }
}

/// (similarity, node) ordered by similarity, ties toward the lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, u32);

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hnsw {
    pub params: HnswParams,
    /// `links[node][level]`, level 0 first.
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
}

struct Vectors<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Vectors<'_> {
    fn get(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn sim(&self, q: &[f64], i: u32) -> f64 {
        dot(q, self.get(i))
    }
}

impl Hnsw {
    /// Build over the row-major `n × dim` matrix `data`.
    pub fn build(data: &[f64], dim: usize, params: HnswParams) -> Self {
        let n = data.len().checked_div(dim).unwrap_or(0);
        let mut g = Hnsw { params, links: Vec::with_capacity(n), entry: None, max_level: 0 };
        let vs = Vectors { data, dim };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        for node in 0..n as u32 {
            let u: f64 = rng.random::<f64>();
            let level = ((-(1.0 - u).ln()) * ml).floor() as usize;
            g.insert(&vs, node, level.min(32));
        }
        g
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, vs: &Vectors, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(node);
            self.max_level = level;
            return;
        };
        let q = vs.get(node);
        for lc in (level + 1..=self.max_level).rev() {
            ep = self.greedy(vs, q, ep, lc);
        }
        let mut eps = vec![ep];
        for lc in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(vs, q, &eps, self.params.ef_construction, lc);
            let chosen = select_neighbors(vs, &found, self.params.m);
            for &Scored(_, nb) in &chosen {
                self.links[nb as usize][lc].push(node);
                if self.links[nb as usize][lc].len() > self.max_links(lc) {
                    self.shrink(vs, nb, lc);
                }
            }
            self.links[node as usize][lc] = chosen.iter().map(|s| s.1).collect();
            eps = found.iter().map(|s| s.1).collect();
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(node);
        }
    }

    fn shrink(&mut self, vs: &Vectors, node: u32, level: usize) {
        let v = vs.get(node);
        let mut cands: Vec<Scored> =
            self.links[node as usize][level].iter().map(|&nb| Scored(vs.sim(v, nb), nb)).collect();
        cands.sort_by(|a, b| b.cmp(a));
        let kept = select_neighbors(vs, &cands, self.max_links(level));
        self.links[node as usize][level] = kept.iter().map(|s| s.1).collect();
    }

    fn greedy(&self, vs: &Vectors, q: &[f64], mut ep: u32, level: usize) -> u32 {
        let mut best = vs.sim(q, ep);
        loop {
            let mut moved = false;
            for &nb in &self.links[ep as usize][level] {
                let s = vs.sim(q, nb);
                if Scored(s, nb) > Scored(best, ep) {
                    best = s;
                    ep = nb;
                    moved = true;
                }
            }
            if !moved {
                return ep;
            }
        }
    }

    /// Best-first search of one layer; returns up to `ef` nodes, best first.
    fn search_layer(&self, vs: &Vectors, q: &[f64], eps: &[u32], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited: HashSet<u32> = eps.iter().copied().collect();
        let mut cands: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &e in eps {
            let s = Scored(vs.sim(q, e), e);
            cands.push(s);
            results.push(Reverse(s));
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(c) = cands.pop() {
            let worst = results.peek().expect("non-empty").0;
            if c < worst && results.len() >= ef {
                break;
            }
            for &nb in &self.links[c.1 as usize][level] {
                if !visited.insert(nb) {
                    continue;
                }
                let s = Scored(vs.sim(q, nb), nb);
                if results.len() < ef || s > results.peek().expect("non-empty").0 {
                    cands.push(s);
                    results.push(Reverse(s));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate top-`k` by inner product with beam width `max(ef, k)`.
    pub fn search(&self, data: &[f64], dim: usize, q: &[f64], k: usize, ef: usize) -> Vec<(u32, f64)> {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let vs = Vectors { data, dim };
        for lc in (1..=self.max_level).rev() {
            ep = self.greedy(&vs, q, ep, lc);
        }
        let found = self.search_layer(&vs, q, &[ep], ef.max(k), 0);
        let mut out: Vec<(u32, f64)> = found.into_iter().map(|s| (s.1, s.0)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }

    /// Level-0 neighbor list of `node`.
    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.links[node as usize][0]
    }

    pub(crate) fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.usize(self.params.m)?;
        w.usize(self.params.ef_construction)?;
        w.usize(self.params.ef_search)?;
        w.u64(self.params.seed)?;
        w.u64(self.entry.map_or(u64::MAX, u64::from))?;
        w.usize(self.max_level)?;
        w.usize(self.links.len())?;
        for node in &self.links {
            w.usize(node.len())?;
            for level in node {
                w.u32s(level)?;
            }
        }
        Ok(())
    }

    pub(crate) fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        let params = HnswParams { m: r.usize()?, ef_construction: r.usize()?, ef_search: r.usize()?, seed: r.u64()? };
        let entry = match r.u64()? {
            u64::MAX => None,
            e => Some(u32::try_from(e).map_err(|_| r.err("entry point out of range".into()))?),
        };
        let max_level = r.usize()?;
        let n = r.usize()?;
        let mut links = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let levels = r.usize()?;
            if levels == 0 || levels > 64 {
                return Err(r.err(format!("implausible level count {levels}")));
            }
            let mut node = Vec::with_capacity(levels);
            for _ in 0..levels {
                node.push(r.u32s()?);
            }
            links.push(node);
        }
        let bad_link = links.iter().flatten().flatten().any(|&nb| nb as usize >= n);
        if bad_link || entry.is_some_and(|e| e as usize >= n) || (n > 0) != entry.is_some() {
            return Err(r.err("graph refers to unknown node".into()));
        }
        Ok(Hnsw { params, links, entry, max_level })
    }
}

/// Diversity heuristic: keep a candidate only if it is more similar to the
/// base node than to every neighbor kept so far; pad with the best pruned
/// candidates up to `m`. `cands` must be sorted best first.
fn select_neighbors(vs: &Vectors, cands: &[Scored], m: usize) -> Vec<Scored> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    let mut pruned = Vec::new();
    for &c in cands {
        if kept.len() >= m {
            break;
        }
        let cv = vs.get(c.1);
        if kept.iter().all(|k| c.0 > vs.sim(cv, k.1)) {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for c in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
