use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use tabaug_core::catalog::PartCatalog;
use tabaug_core::corpus::CorpusStore;
use tabaug_core::dense::DenseIndex;
use tabaug_core::pipeline::{System, TaskModels};
use tabaug_core::reader::ReaderModel;
use tabaug_core::sparse::SparseIndex;
use tabaug_core::Execution;

use crate::config::{Limits, ServiceConfig};
use crate::ServiceError;

/// Immutable after startup; shared by every request.
#[derive(Debug)]
pub struct AppState {
    pub system: System,
    pub store: CorpusStore,
    pub default_k: usize,
    pub limits: Limits,
}

impl AppState {
    /// Load every configured artifact and check that all of them were built
    /// over the catalog of the configured store split.
    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let store = CorpusStore::open(&cfg.store)?;
        let catalog = PartCatalog::from_store(&store, &cfg.index_split, Execution::default())?;
        let mut system = System::new(catalog, store.vocab.clone());
        if let Some(p) = &cfg.sparse_index {
            system = system.with_sparse(SparseIndex::load(p)?)?;
        }
        let mut indexes: HashMap<PathBuf, Arc<DenseIndex>> = HashMap::new();
        for (&task, a) in &cfg.tasks {
            let dense = match indexes.get(&a.dense_index) {
                Some(d) => d.clone(),
                None => {
                    let d = Arc::new(DenseIndex::load(&a.dense_index)?);
                    indexes.insert(a.dense_index.clone(), d.clone());
                    d
                }
            };
            let (reader, query_tower) = ReaderModel::load(&a.reader)?;
            system = system.with_task(task, TaskModels { dense, reader, query_tower })?;
        }
        system.policies = cfg.normalization.clone();
        Ok(AppState { system, store, default_k: cfg.default_k, limits: cfg.limits.clone() })
    }
}
