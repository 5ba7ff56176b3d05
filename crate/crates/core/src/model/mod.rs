//! The DeepGS network, its ablation variants, and the training loop.

mod bundle;
mod check;
mod config;
mod network;
mod train;

pub use bundle::Bundle;
pub use check::{gradcheck_config, model_gradcheck};
pub use config::{DeepGSConfig, Variant};
pub use network::{fitted_kernel, DeepGS, DrugInput, Featurizer, LatentBundle, ProteinInput, SequenceEncoder};
pub use train::{predict_indices, train, train_with, EpochRecord, History, PreparedData, TrainOptions};

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::smiles::SmilesError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid SMILES `{smiles}`: {source}")]
    Smiles {
        smiles: String,
        #[source]
        source: SmilesError,
    },
    #[error("molecule has no atoms")]
    EmptyGraph,
    #[error("protein matrix {rows}x{width} cannot hold {layers} convolutions (kernel {kernel})")]
    SequenceTooShortForKernel {
        rows: usize,
        width: usize,
        kernel: usize,
        layers: usize,
    },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
