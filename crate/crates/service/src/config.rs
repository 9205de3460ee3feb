//! Service configuration, read from TOML.
//!
//! ```toml
//! store = "artifacts/store"
//! sparse_index = "artifacts/bm25.idx"
//! default_k = 10
//!
//! [tasks.column_population]
//! dense_index = "artifacts/dense.idx"
//! reader = "artifacts/reader-col.bin"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabaug_core::table::{NormalizationPolicy, Task};

use crate::ServiceError;

pub const CONFIG_ENV: &str = "TABAUG_CONFIG";
pub const BIND_ENV: &str = "TABAUG_BIND";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskArtifacts {
    pub dense_index: PathBuf,
    /// Reader model file; it carries the query tower tuned with it.
    pub reader: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub max_k: usize,
    pub max_body_bytes: usize,
    pub max_rows: usize,
    pub max_cols: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_k: 100, max_body_bytes: 1 << 20, max_rows: 1000, max_cols: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub store: PathBuf,
    /// Split whose tables were indexed.
    #[serde(default = "default_split")]
    pub index_split: String,
    #[serde(default)]
    pub sparse_index: Option<PathBuf>,
    #[serde(default)]
    pub tasks: BTreeMap<Task, TaskArtifacts>,
    #[serde(default = "default_k")]
    pub default_k: usize,
    /// Overrides of each task's default answer normalization.
    #[serde(default)]
    pub normalization: BTreeMap<Task, NormalizationPolicy>,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub limits: Limits,
}

fn default_split() -> String {
    "train".into()
}

fn default_k() -> usize {
    10
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl ServiceConfig {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            store: store.into(),
            index_split: default_split(),
            sparse_index: None,
            tasks: BTreeMap::new(),
            default_k: default_k(),
            normalization: BTreeMap::new(),
            bind: default_bind(),
            limits: Limits::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path` and resolve relative artifact paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_against(dir);
        }
        Ok(cfg)
    }

    /// `path`, or the file named by `TABAUG_CONFIG`; the bind address is
    /// then overridden by `TABAUG_BIND` when set.
    pub fn from_env(path: Option<&Path>) -> Result<Self, ServiceError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(CONFIG_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| ServiceError::Config(format!("no config file given and {CONFIG_ENV} is unset")))?,
        };
        let mut cfg = Self::load(&path)?;
        if let Ok(bind) = std::env::var(BIND_ENV) {
            cfg.bind = bind;
        }
        Ok(cfg)
    }

    fn resolve_against(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.store);
        if let Some(p) = self.sparse_index.as_mut() {
            fix(p);
        }
        for a in self.tasks.values_mut() {
            fix(&mut a.dense_index);
            fix(&mut a.reader);
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.default_k == 0 || self.default_k > self.limits.max_k {
            return Err(ServiceError::Config(format!(
                "default_k must be in 1..={}, got {}",
                self.limits.max_k, self.default_k
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let text = r#"
            store = "store"
            sparse_index = "/abs/bm25.idx"
            default_k = 5

            [tasks.cell_filling]
            dense_index = "dense.idx"
            reader = "reader.bin"

            [normalization]
            cell_filling = "lowercase"
        "#;
        let mut cfg = ServiceConfig::from_toml(text).unwrap();
        cfg.resolve_against(Path::new("/srv/tabaug"));
        assert_eq!(cfg.store, Path::new("/srv/tabaug/store"));
        assert_eq!(cfg.sparse_index.as_deref(), Some(Path::new("/abs/bm25.idx")));
        assert_eq!(cfg.tasks[&Task::CellFilling].reader, Path::new("/srv/tabaug/reader.bin"));
        assert_eq!(cfg.normalization[&Task::CellFilling], NormalizationPolicy::Lowercase);
        assert_eq!(cfg.bind, "127.0.0.1:8080");
        assert_eq!(cfg.limits, Limits::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_k() {
        assert!(ServiceConfig::from_toml("store = \"s\"\nstroe = 1").is_err());
        assert!(ServiceConfig::from_toml("store = \"s\"\ndefault_k = 0").is_err());
    }
}
