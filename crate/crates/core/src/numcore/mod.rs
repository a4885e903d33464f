//! Minimal dense-array numeric core: layers with hand-written backward
//! passes, the Adam optimizer, dropout, a finite-difference gradient checker
//! and a checkpoint format.

mod adam;
mod array;
mod checkpoint;
mod gradcheck;
pub mod layers;
mod params;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig};
pub use array::DenseArray;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, relative_error, GradCheck};
pub use layers::{layer_backward, layer_forward, sigmoid, Activation, Layer, LayerCache, LayerKind, Mode};
pub use params::{Param, ParamStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("unknown layer kind {0:?}")]
    UnknownLayerKind(String),

    #[error("backward called before forward on {0} layer")]
    BackwardBeforeForward(String),

    #[error("non-finite gradient in parameter {0:?}")]
    NonFiniteGradient(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("missing parameter {0:?}")]
    MissingParam(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl NumError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, NumError::NonFiniteGradient(_) | NumError::NonFiniteLoss(_))
    }
}
