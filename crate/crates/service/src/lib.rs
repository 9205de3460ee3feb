//! HTTP service over loaded augmentation artifacts, and the pieces of the
//! command-line driver that the service shares.

pub mod api;
pub mod config;
pub mod state;
pub mod wire;

pub use api::router;
pub use config::ServiceConfig;
pub use state::AppState;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] tabaug_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
