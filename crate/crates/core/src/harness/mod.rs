//! Scenario engine and experiment runners.

pub mod dataset;
pub mod experiment1;
pub mod experiment2;
pub mod popcon;
pub mod scenario;
pub mod uniform;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::actors::ActorError;
use crate::crypto::CryptoError;
use crate::economics::EconError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error("cannot parse {what}: {reason}")]
    Parse { what: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Script(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("at least one provider is required")]
    NoCsps,
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}
