//! Retrieve → read → aggregate over loaded artifacts.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{PartCatalog, PartId};
use crate::corpus::EntityVocab;
use crate::dense::{DenseIndex, Encoder};
use crate::error::{Error, Result};
use crate::reader::{aggregate, Instance, QueryContext, RankedAnswer, ReaderModel};
use crate::sparse::SparseIndex;
use crate::table::{linearize_query, AugmentationQuery, NormalizationPolicy, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Sparse,
    Dense,
}

/// A retriever over the catalog: BM25, or a query tower against a dense index.
#[derive(Debug, Clone, Copy)]
pub enum Retrieval<'a> {
    Sparse(&'a SparseIndex),
    Dense { index: &'a DenseIndex, tower: &'a Encoder },
}

impl Retrieval<'_> {
    /// Top-`k` parts for the linearized query, excluding the query's source
    /// table.
    pub fn search(&self, query: &AugmentationQuery, k: usize, catalog: &PartCatalog) -> Result<Vec<(PartId, f64)>> {
        let text = linearize_query(query);
        let own = query.source_table_id.as_deref().map(|s| catalog.parts_of_table(s)).unwrap_or(0..0);
        match self {
            Retrieval::Sparse(idx) => Ok(idx.search_filtered(&text, k, |p| !own.contains(&p))),
            Retrieval::Dense { index, tower } => index.search(&tower.encode(&text), k, |p| !own.contains(&p)),
        }
    }
}

/// Read `retrieved` (in rank order) and aggregate into ranked answers.
pub fn read(
    query: &AugmentationQuery,
    retrieved: &[(PartId, f64)],
    catalog: &PartCatalog,
    vocab: &EntityVocab,
    reader: &ReaderModel,
    policy: NormalizationPolicy,
) -> Result<Vec<RankedAnswer>> {
    let ctx = QueryContext::new(query, policy);
    let ids: Vec<PartId> = retrieved.iter().map(|r| r.0).collect();
    let r: Vec<f64> = retrieved.iter().map(|r| r.1).collect();
    let inst = Instance::prepare(&ctx, &ids, catalog, vocab, &reader.featurizer);
    Ok(aggregate(&inst.readings(reader, &r)?))
}

/// Models trained for one task: its dense index, and the reader with the
/// query tower it was fine-tuned with. Tasks may share one index.
#[derive(Debug, Clone)]
pub struct TaskModels {
    pub dense: Arc<DenseIndex>,
    pub reader: ReaderModel,
    pub query_tower: Encoder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Augmentation {
    pub k: usize,
    pub retrieved: Vec<(PartId, f64)>,
    pub answers: Vec<RankedAnswer>,
    /// No retrieved part had a candidate.
    pub unanswerable: bool,
}

/// Everything needed to serve queries. Immutable once built.
#[derive(Debug, Clone)]
pub struct System {
    pub catalog: PartCatalog,
    pub vocab: EntityVocab,
    pub sparse: Option<SparseIndex>,
    pub tasks: BTreeMap<Task, TaskModels>,
    pub policies: BTreeMap<Task, NormalizationPolicy>,
}

impl System {
    pub fn new(catalog: PartCatalog, vocab: EntityVocab) -> Self {
        System { catalog, vocab, sparse: None, tasks: BTreeMap::new(), policies: BTreeMap::new() }
    }

    /// Fails unless `digest` is the loaded catalog's.
    pub fn check_digest(&self, what: &str, digest: u64) -> Result<()> {
        if digest != self.catalog.digest() {
            return Err(Error::ArtifactMismatch(format!(
                "{what} was built over a different part catalog ({digest:016x} vs {:016x})",
                self.catalog.digest()
            )));
        }
        Ok(())
    }

    pub fn with_sparse(mut self, sparse: SparseIndex) -> Result<Self> {
        self.check_digest("sparse index", sparse.catalog_digest)?;
        self.sparse = Some(sparse);
        Ok(self)
    }

    pub fn with_task(mut self, task: Task, models: TaskModels) -> Result<Self> {
        self.check_digest("dense index", models.dense.catalog_digest)?;
        if models.dense.len() != self.catalog.len() {
            return Err(Error::ArtifactMismatch("dense index size differs from the catalog".into()));
        }
        if models.query_tower.dim() != models.dense.dim() {
            return Err(Error::DimensionMismatch { left: models.query_tower.dim(), right: models.dense.dim() });
        }
        self.tasks.insert(task, models);
        Ok(self)
    }

    pub fn policy(&self, task: Task) -> NormalizationPolicy {
        self.policies.get(&task).copied().unwrap_or_else(|| task.default_normalization())
    }

    /// The retriever for `mode`; dense retrieval uses `task`'s models, or the
    /// first loaded task when `task` is `None`.
    pub fn retrieval(&self, mode: RetrievalMode, task: Option<Task>) -> Result<Retrieval<'_>> {
        match mode {
            RetrievalMode::Sparse => {
                self.sparse.as_ref().map(Retrieval::Sparse).ok_or(Error::NotLoaded("sparse index"))
            }
            RetrievalMode::Dense => {
                let m = match task {
                    Some(t) => self.tasks.get(&t),
                    None => self.tasks.values().next(),
                };
                let m = m.ok_or(Error::NotLoaded("dense index"))?;
                Ok(Retrieval::Dense { index: &m.dense, tower: &m.query_tower })
            }
        }
    }

    /// Dense retrieval with the task's tower, then reading.
    pub fn augment(&self, query: &AugmentationQuery, k: usize) -> Result<Augmentation> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let models = self.tasks.get(&query.task).ok_or(Error::NotLoaded("dense index"))?;
        let retrieval = Retrieval::Dense { index: &models.dense, tower: &models.query_tower };
        let retrieved = retrieval.search(query, k, &self.catalog)?;
        let answers = read(query, &retrieved, &self.catalog, &self.vocab, &models.reader, self.policy(query.task))?;
        Ok(Augmentation { k, unanswerable: answers.is_empty(), retrieved, answers })
    }
}
