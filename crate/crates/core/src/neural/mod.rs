//! A small differentiable-model kit with hand-written gradients.
//!
//! Everything runs in `f64`. Layers hold [`ParamId`]s into a [`ParamStore`];
//! `forward` returns whatever the matching `backward` needs, and `backward`
//! accumulates parameter gradients into the store and returns the gradient
//! with respect to its input.

mod adam;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod params;

use ndarray::Array2;
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use dense::{relu, relu_backward, Dense};
pub use gradcheck::{gradcheck, relative_error, Differentiable, GradReport};
pub use loss::{mse, softmax_nll, softmax_rows};
pub use lstm::{Lstm, LstmCache};
pub use params::{xavier_uniform, Param, ParamId, ParamStore};

pub type Mat = Array2<f64>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { loss: f64, epoch: usize, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
