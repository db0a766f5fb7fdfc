//! Minimal dense-tensor neural network substrate: reverse-mode autodiff,
//! the layer primitives the steering pipeline needs, Adam, gradient
//! checking, and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{BoundParams, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),
    #[error("unknown parameter name '{0}'")]
    UnknownParam(String),
    #[error("optimizer state poisoned: NaN gradient for '{0}'")]
    PoisonedState(String),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
