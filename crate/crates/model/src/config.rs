use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

/// Architecture of the fixation decoder and its output heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeModelConfig {
    /// Number of fixation queries, i.e. the padded sequence length.
    pub max_fixations: usize,
    pub d_model: usize,
    pub n_decoder_layers: usize,
    pub n_heads: usize,
    /// Hidden width of the decoder feed-forward blocks.
    pub mlp_hidden: usize,
    /// Hidden width of each output head.
    pub head_hidden: usize,
    /// Add 2D sinusoidal encodings to the patch memory.
    pub positional_encoding: bool,
    pub seed: u64,
}

impl Default for GazeModelConfig {
    fn default() -> Self {
        Self {
            max_fixations: gazebench_core::DEFAULT_MAX_FIXATIONS,
            d_model: 64,
            n_decoder_layers: 2,
            n_heads: 4,
            mlp_hidden: 128,
            head_hidden: 64,
            positional_encoding: true,
            seed: 0,
        }
    }
}

impl GazeModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.max_fixations == 0 {
            return fail("max_fixations must be at least 1".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.positional_encoding && !self.d_model.is_multiple_of(4) {
            return fail(format!(
                "2D positional encoding needs d_model divisible by 4, got {}",
                self.d_model
            ));
        }
        if self.mlp_hidden == 0 || self.head_hidden == 0 {
            return fail("hidden widths must be positive".into());
        }
        Ok(())
    }
}

/// Adam settings with separate learning rates for the decoder stack and for
/// the queries plus output heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decoder: f64,
    pub lr_heads: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 200,
            lr_decoder: 1e-4,
            lr_heads: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if self.lr_decoder < 0.0 || self.lr_heads < 0.0 {
            return Err(ModelError::Config("learning rates must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
