//! Metrics, confidence intervals and evaluation runs.

pub mod harness;
pub mod metrics;
pub mod stats;

pub use harness::{
    evaluate, evaluate_retrieval, sweep_k, EvalConfigSnapshot, EvalResult, EvalSetup, Metric, QueryRecord,
    RetrievalEval,
};
pub use metrics::{ndcg_at_10, reciprocal_rank};
pub use stats::{confidence_interval, t_quantile};
