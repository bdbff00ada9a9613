use thiserror::Error;

use crate::train::EpochLoss;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss undefined for empty ground truth")]
    EmptyGroundTruth,

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        trace: Vec<EpochLoss>,
    },

    #[error("gradient check kept landing within {margin} of an L1 kink after {attempts} attempts")]
    KinkProximity { attempts: usize, margin: f64 },

    #[error("unknown case '{0}'")]
    UnknownCase(String),

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] gazebench_core::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
