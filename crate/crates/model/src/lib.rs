//! Fixation-query transformer that predicts scanpaths (position, duration
//! and a padding decision per step) from a grid of patch embeddings.

mod config;
pub mod container;
pub mod decode;
pub mod embedding;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod tape;
pub mod train;

pub use config::{GazeModelConfig, OptimConfig};
pub use decode::{decode_scanpath, decode_with_noise, termination_index, DecodeMode, DecodedScanpath};
pub use embedding::{
    positional_encoding_2d, EmbeddingProvider, EmbeddingStore, Hotspot, HotspotEncoder, MultimodalEmbedding,
    SyntheticHotspotProvider,
};
pub use error::{ModelError, Result};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ModelObjective, Objective};
pub use loss::{case_loss, loss_total, reparam_sample, LossBreakdown, Noise};
pub use network::{FixationDecoderOutput, GaussianHeadOutput, GazeModel, ParamGroup};
pub use train::{evaluate_loss, train, train_with_progress, EpochLoss, TrainOutcome, TrainingCase};
