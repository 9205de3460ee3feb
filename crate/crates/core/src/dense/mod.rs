//! Biencoder retrieval: hashed towers, HNSW index, and retriever training.

pub mod encoder;
pub mod hnsw;
pub mod index;
pub mod train;

use std::fs;
use std::io::BufWriter;
use std::path::Path;

pub use encoder::{dot, e2e_update_query_tower, score_pair, Encoder, EncoderConfig, EncoderKind, SparseGrad};
pub use hnsw::{Hnsw, HnswParams};
pub use index::DenseIndex;
pub use train::{
    gather_examples, mil_batch_loss, mil_loss_from_scores, train_retriever, MilBatch, RetrieverTrainConfig,
    RetrieverTrainReport, TowerGrads,
};

use crate::binio::{BinReader, BinWriter};
use crate::catalog::{PartCatalog, PartId};
use crate::error::Result;
use crate::table::{linearize_query, AugmentationQuery};

const MAGIC: &[u8; 8] = b"TAUGRETR";
const VERSION: u32 = 1;

/// Query and context towers scored by inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct Retriever {
    pub query: Encoder,
    pub context: Encoder,
}

impl Retriever {
    /// Both towers from the same seed, hence identical at the start.
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        let query = Encoder::new(cfg, seed)?;
        let context = query.clone();
        Ok(Retriever { query, context })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(fs::File::create(path)?), MAGIC, VERSION)?;
        self.query.write_to(&mut w)?;
        self.context.write_to(&mut w)?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let (mut r, version) = BinReader::open(&bytes[..], MAGIC, "retriever model")?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let query = Encoder::read_from(&mut r)?;
        let context = Encoder::read_from(&mut r)?;
        if query.dim() != context.dim() {
            return Err(r.err("tower dimensions differ".into()));
        }
        r.finish()?;
        Ok(Retriever { query, context })
    }
}

/// Top-`k` parts for `query` by inner product, never returning parts of the
/// query's source table.
pub fn dense_search(
    index: &DenseIndex,
    query_tower: &Encoder,
    query: &AugmentationQuery,
    k: usize,
    catalog: &PartCatalog,
) -> Result<Vec<(PartId, f64)>> {
    let q = query_tower.encode(&linearize_query(query));
    let own = query.source_table_id.as_deref().map(|s| catalog.parts_of_table(s)).unwrap_or(0..0);
    index.search(&q, k, |p| !own.contains(&p))
}
