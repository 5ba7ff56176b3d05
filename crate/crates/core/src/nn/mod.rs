//! Minimal neural-network toolkit: tensors, a differentiation tape, layers and ADAM.

pub mod gradcheck;
mod graph;
pub mod layers;
pub mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use layers::{BiGru, Conv2d, Dense, GatLayer, GnnLayer, GruCell};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("kernel {kernel} does not fit input of {height}x{width}")]
    KernelTooLarge { kernel: usize, height: usize, width: usize },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
