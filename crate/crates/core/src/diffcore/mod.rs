//! Minimal dense reverse-mode differentiation engine.
//!
//! A [`Tape`] records a forward pass over rank-2 [`Tensor`]s and walks it
//! backwards to produce [`Gradients`] for a [`ParamStore`]. Reductions and
//! matrix products accumulate in `f64` regardless of the element type.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{GradCheck, GradCheckReport, Mismatch};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{SparsePattern, Tape, Var};
pub use tensor::{Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: expected a rank-2 tensor, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    Length { shape: Vec<usize>, len: usize },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("parameter {0:?} missing from checkpoint")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
