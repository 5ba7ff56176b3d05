use std::path::Path;

use deepgs::nn::NnError;
use deepgs::{DataError, EmbeddingError, ModelError};
use thiserror::Error;

/// Every failure maps to one of the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidFoldCount(_) | DataError::FoldOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Data(d) => d.into(),
            ModelError::Config(_) | ModelError::SequenceTooShortForKernel { .. } => CliError::Usage(e.to_string()),
            ModelError::Smiles { .. } | ModelError::EmptyGraph | ModelError::Bundle(_) => CliError::Data(e.to_string()),
            ModelError::Nn(NnError::Checkpoint(_)) => CliError::Data(e.to_string()),
            ModelError::NonFiniteLoss { .. } | ModelError::Nn(_) | ModelError::Metrics(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}
