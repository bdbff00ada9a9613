//! Scanpath data model and evaluation metrics.
//!
//! The crate is split along the evaluation stack:
//!
//! - [`scanpath`]: fixations, scanpaths and the fixed-length padded sequence
//!   consumed and produced by the gaze model.
//! - [`saliency`]: duration-weighted fixation heatmaps, IoU, CC and the
//!   spread sweep.
//! - [`multimatch`]: five-dimension vector-based scanpath similarity.
//! - [`analytics`]: correlations, bootstrap intervals, case-difficulty
//!   ranking and human-evaluation tabulation.

pub mod analytics;
mod error;
pub mod multimatch;
pub mod saliency;
pub mod scanpath;

pub use error::{Error, Result};
pub use scanpath::{Fixation, FixationQuad, FixationQuadSequence, Scanpath};

/// Maximum fixation sequence length used throughout the toolkit.
pub const DEFAULT_MAX_FIXATIONS: usize = 50;
