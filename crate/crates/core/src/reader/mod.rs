//! Extractive reader: candidates in retrieved parts are scored by a linear
//! model over occurrence features, combined with retrieval scores and
//! aggregated per normalized string.

pub mod aggregate;
pub mod candidates;
pub mod features;
pub mod train;

use std::fs;
use std::io::BufWriter;
use std::path::Path;

pub use aggregate::{aggregate, reader_loss, score_part, PartReading, Provenance, RankedAnswer};
pub use candidates::{extract_candidates, mark_candidates, unmark, CandidateOccurrence, FieldKind};
pub use features::{featurize, FeaturizerConfig, QueryContext};
pub use train::{train_reader_e2e, E2eInstance, ReaderTrainConfig, ReaderTrainReport};

use crate::binio::{BinReader, BinWriter};
use crate::catalog::{PartCatalog, PartId};
use crate::corpus::EntityVocab;
use crate::dense::Encoder;
use crate::error::{Error, Result};
use crate::hashing::SparseVec;
use crate::table::Linearization;

const MAGIC: &[u8; 8] = b"TAUGREAD";
const VERSION: u32 = 1;

/// Linear occurrence scorer: logit = w · φ.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderModel {
    pub featurizer: FeaturizerConfig,
    pub weights: Vec<f64>,
}

impl ReaderModel {
    /// All-zero weights: every part's occurrences start uniform.
    pub fn new(featurizer: FeaturizerConfig) -> Self {
        ReaderModel { featurizer, weights: vec![0.0; featurizer.buckets] }
    }

    pub fn logit(&self, phi: &SparseVec) -> f64 {
        phi.dot_dense(&self.weights)
    }

    /// Save together with the query tower it was trained against.
    pub fn save(&self, query_tower: &Encoder, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(fs::File::create(path)?), MAGIC, VERSION)?;
        w.usize(self.featurizer.buckets)?;
        w.f64s(&self.weights)?;
        query_tower.write_to(&mut w)?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Encoder)> {
        let bytes = fs::read(path)?;
        let (mut r, version) = BinReader::open(&bytes[..], MAGIC, "reader model")?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let buckets = r.usize()?;
        let weights = r.f64s()?;
        if weights.len() != buckets || buckets == 0 {
            return Err(r.err("weight count does not match feature buckets".into()));
        }
        let tower = Encoder::read_from(&mut r)?;
        r.finish()?;
        Ok((ReaderModel { featurizer: FeaturizerConfig { buckets }, weights }, tower))
    }
}

/// Retrieved parts with their candidates and features, independent of the
/// reader weights.
#[derive(Debug, Clone)]
pub struct Instance {
    pub parts: Vec<PartId>,
    pub occurrences: Vec<Vec<CandidateOccurrence>>,
    pub features: Vec<Vec<SparseVec>>,
}

impl Instance {
    pub fn prepare(
        ctx: &QueryContext,
        retrieved: &[PartId],
        catalog: &PartCatalog,
        vocab: &EntityVocab,
        featurizer: &FeaturizerConfig,
    ) -> Self {
        let mut occurrences = Vec::with_capacity(retrieved.len());
        let mut features = Vec::with_capacity(retrieved.len());
        for (rank, &p) in retrieved.iter().enumerate() {
            let part = catalog.part(p);
            let lin = Linearization::of_part(part);
            let occs = extract_candidates(part, p, &lin, ctx.task, vocab, ctx.policy);
            features.push(occs.iter().map(|o| featurize(featurizer, ctx, part, o, rank)).collect());
            occurrences.push(occs);
        }
        Instance { parts: retrieved.to_vec(), occurrences, features }
    }

    /// The first `n` retrieved parts.
    pub fn truncated(&self, n: usize) -> Instance {
        let n = n.min(self.parts.len());
        Instance {
            parts: self.parts[..n].to_vec(),
            occurrences: self.occurrences[..n].to_vec(),
            features: self.features[..n].to_vec(),
        }
    }

    pub fn has_candidates(&self) -> bool {
        self.occurrences.iter().any(|o| !o.is_empty())
    }

    /// Per-part readings under `model` with retrieval scores `r`.
    pub fn readings(&self, model: &ReaderModel, r: &[f64]) -> Result<Vec<PartReading>> {
        if r.len() != self.parts.len() {
            return Err(Error::DimensionMismatch { left: r.len(), right: self.parts.len() });
        }
        Ok((0..self.parts.len())
            .map(|j| {
                let logits: Vec<f64> = self.features[j].iter().map(|f| model.logit(f)).collect();
                PartReading {
                    part: self.parts[j],
                    retrieval_score: r[j],
                    occurrences: self.occurrences[j].clone(),
                    occurrence_probs: score_part(&logits).unwrap_or_default(),
                }
            })
            .collect())
    }
}
