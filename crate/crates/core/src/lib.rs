//! Retrieval-based table augmentation over a data lake.
//!
//! Given a partial seed table the pipeline retrieves evidence table-parts from
//! an indexed corpus and extracts ranked candidates for row population,
//! column-header population and cell filling, each with provenance.

pub mod binio;
pub mod catalog;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod experiment;
pub mod hashing;
pub mod par;
pub mod pipeline;
pub mod reader;
pub mod sparse;
pub mod synth;
pub mod table;
pub mod text;

pub use error::{Error, Result};
pub use par::Execution;
