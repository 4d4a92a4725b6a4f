//! Dense tensors, reverse-mode differentiation, Adam, seeded RNG and
//! checkpoint I/O. Everything trainable in the crate is built on this.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod rng;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{Checkpoint, FORMAT as CHECKPOINT_FORMAT, VERSION as CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, REL_FLOOR};
pub use optim::{mean_gradients, Adam};
pub use params::{ParamId, ParamStore};
pub use rng::Rng;
pub use tape::{sigmoid, softplus, Bindings, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{train_minibatch, TrainConfig, TrainReport};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensors have at most 3 axes, got {0}")]
    TooManyAxes(usize),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite or out-of-domain value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

/// `shape`-sized tensor of independent standard normal draws.
pub fn gaussian(rng: &mut Rng, shape: &[usize]) -> Tensor {
    rng.gaussian(shape)
}
