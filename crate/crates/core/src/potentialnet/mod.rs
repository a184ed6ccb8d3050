//! Staged PotentialNet, its single-update and ligand-only variants, and a
//! plain gated graph network baseline.

mod config;
mod loss;
mod model;

use thiserror::Error;

use crate::chemio::ChemError;
use crate::diffcore::DiffError;
use crate::graphbuild::GraphError;

pub use config::{Mode, ModelConfig, TaskKind};
pub use loss::{batch_weights, loss, weighted_loss};
pub use model::{predict_batch, PotentialNet, PreparedGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("labels: {0}")]
    Labels(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("sample {id}: {source}")]
    Sample { id: String, source: Box<ModelError> },
}
