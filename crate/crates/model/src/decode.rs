//! Turning head outputs into scanpaths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gazebench_core::{Fixation, Scanpath};

use crate::loss::{reparam_sample, Noise};
use crate::network::GaussianHeadOutput;
use crate::Result;

/// Rows with a padding probability above this value terminate the sequence.
pub const TERMINATION_THRESHOLD: f64 = 0.5;
pub const MIN_DURATION_MS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Emit the predicted means.
    Deterministic,
    /// Emit reparametrized samples drawn from a seeded generator.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedScanpath {
    pub scanpath: Scanpath,
    /// The first row was already a padding decision.
    pub degenerate: bool,
}

/// Number of rows kept before the first padding decision.
pub fn termination_index(pad_prob: &[f64]) -> usize {
    pad_prob
        .iter()
        .position(|&p| p > TERMINATION_THRESHOLD)
        .unwrap_or(pad_prob.len())
}

pub fn decode_scanpath(
    out: &GaussianHeadOutput,
    case_id: &str,
    image_dims: (u32, u32),
    mode: DecodeMode,
) -> Result<DecodedScanpath> {
    let noise = match mode {
        DecodeMode::Deterministic => Noise::zeros(out.len()),
        DecodeMode::Stochastic { seed } => Noise::sample(out.len(), &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    decode_with_noise(out, case_id, image_dims, &noise)
}

/// Decodes with explicit noise; zero noise reproduces the deterministic decode.
pub fn decode_with_noise(
    out: &GaussianHeadOutput,
    case_id: &str,
    image_dims: (u32, u32),
    noise: &Noise,
) -> Result<DecodedScanpath> {
    let keep = termination_index(&out.pad_prob);
    let fixations = (0..keep)
        .map(|i| {
            let x = reparam_sample(out.mean_x[i], out.logvar_x[i], noise.eps_x[i]);
            let y = reparam_sample(out.mean_y[i], out.logvar_y[i], noise.eps_y[i]);
            let t = reparam_sample(out.mean_t[i], out.logvar_t[i], noise.eps_t[i]);
            Fixation::new(
                clamp_unit(x),
                clamp_unit(y),
                finite_or(t * 1000.0, MIN_DURATION_MS).max(MIN_DURATION_MS),
            )
        })
        .collect::<gazebench_core::Result<Vec<_>>>()?;
    let scanpath = Scanpath::new(case_id, image_dims.0, image_dims.1, fixations)?;
    Ok(DecodedScanpath {
        scanpath,
        degenerate: keep == 0,
    })
}

fn finite_or(v: f64, fallback: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        fallback
    }
}

fn clamp_unit(v: f64) -> f64 {
    finite_or(v, 0.5).clamp(0.0, 1.0)
}
