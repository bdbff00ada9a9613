//! Conditioning memory for the fixation decoder.
//!
//! The decoder only sees a grid of patch vectors. Where they come from is
//! behind [`EmbeddingProvider`]: either a deterministic synthetic encoder
//! that plants known hotspots, or a store of precomputed embeddings loaded
//! from a container file.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Tensor};
use crate::{ModelError, Result};

/// `P` patch vectors of width `d` laid out on a `rows x cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalEmbedding {
    patches: Array2<f64>,
    grid: (usize, usize),
}

impl MultimodalEmbedding {
    pub fn new(patches: Array2<f64>, grid: (usize, usize)) -> Result<Self> {
        if grid.0 * grid.1 != patches.nrows() || patches.nrows() == 0 {
            return Err(ModelError::Shape(format!(
                "grid {}x{} does not hold {} patches",
                grid.0,
                grid.1,
                patches.nrows()
            )));
        }
        if patches.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Shape("embedding contains non-finite values".into()));
        }
        Ok(Self { patches, grid })
    }

    pub fn patches(&self) -> &Array2<f64> {
        &self.patches
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.patches.ncols()
    }

    pub fn num_patches(&self) -> usize {
        self.patches.nrows()
    }
}

/// Fixed 2D sinusoidal encodings, one row per patch in row-major order.
///
/// The first half of the channels encodes the grid row and the second half
/// the column; within each half, channel `2k` is `sin(p / 10000^(2k/h))`
/// and `2k + 1` the matching cosine, where `h = d / 2`.
pub fn positional_encoding_2d(grid: (usize, usize), d: usize) -> Result<Array2<f64>> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(ModelError::Config(format!(
            "2D positional encoding needs a width divisible by 4, got {d}"
        )));
    }
    let half = d / 2;
    let (rows, cols) = grid;
    let mut pe = Array2::zeros((rows * cols, d));
    for r in 0..rows {
        for c in 0..cols {
            let mut out = pe.row_mut(r * cols + c);
            for (offset, pos) in [(0, r as f64), (half, c as f64)] {
                for k in (0..half).step_by(2) {
                    let freq = 10000f64.powf(-(k as f64) / half as f64);
                    out[offset + k] = (pos * freq).sin();
                    out[offset + k + 1] = (pos * freq).cos();
                }
            }
        }
    }
    Ok(pe)
}

pub trait EmbeddingProvider {
    fn embedding(&self, case_id: &str) -> Result<MultimodalEmbedding>;
}

/// A region of interest planted by the synthetic encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub cx: f64,
    pub cy: f64,
    pub weight: f64,
}

/// Deterministically encodes hotspot layouts into patch embeddings.
///
/// Hotspots are sorted by descending weight and the first [`Self::SLOTS`]
/// get a slot of four base features per patch: Gaussian proximity, weighted
/// proximity and the signed offset from the patch center to the hotspot.
/// Channels beyond the base features are fixed random mixtures of them.
#[derive(Debug, Clone)]
pub struct HotspotEncoder {
    grid: (usize, usize),
    d_model: usize,
    kernel_width: f64,
    mixing: Array2<f64>,
}

impl HotspotEncoder {
    pub const SLOTS: usize = 4;
    const FEATURES: usize = 4;
    const MIXING_SEED: u64 = 0x5eed_4d1c;

    pub fn new(grid: (usize, usize), d_model: usize) -> Self {
        let base = Self::SLOTS * Self::FEATURES;
        let mut rng = ChaCha8Rng::seed_from_u64(Self::MIXING_SEED);
        let scale = 1.0 / (base as f64).sqrt();
        let extra = d_model.saturating_sub(base);
        let mixing = Array2::from_shape_fn((extra, base), |_| {
            scale * rng.sample::<f64, _>(StandardNormal)
        });
        Self {
            grid,
            d_model,
            kernel_width: 0.15,
            mixing,
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn encode(&self, hotspots: &[Hotspot], noise_scale: f64, seed: u64) -> MultimodalEmbedding {
        let mut sorted = hotspots.to_vec();
        sorted.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        let (rows, cols) = self.grid;
        let base_len = Self::SLOTS * Self::FEATURES;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patches = Array2::zeros((rows * cols, self.d_model));
        let inv_two_var = 1.0 / (2.0 * self.kernel_width * self.kernel_width);
        for r in 0..rows {
            for c in 0..cols {
                let px = (c as f64 + 0.5) / cols as f64;
                let py = (r as f64 + 0.5) / rows as f64;
                let mut base = vec![0.0; base_len];
                for (slot, h) in sorted.iter().take(Self::SLOTS).enumerate() {
                    let (dx, dy) = (h.cx - px, h.cy - py);
                    let proximity = (-(dx * dx + dy * dy) * inv_two_var).exp();
                    let b = &mut base[slot * Self::FEATURES..(slot + 1) * Self::FEATURES];
                    b[0] = proximity;
                    b[1] = proximity * h.weight / 3.0;
                    b[2] = dx;
                    b[3] = dy;
                }
                let mut out = patches.row_mut(r * cols + c);
                for ch in 0..self.d_model {
                    let clean = if ch < base_len {
                        base[ch]
                    } else {
                        self.mixing
                            .row(ch - base_len)
                            .iter()
                            .zip(&base)
                            .map(|(m, b)| m * b)
                            .sum()
                    };
                    let noise: f64 = rng.sample(StandardNormal);
                    out[ch] = clean + noise_scale * noise;
                }
            }
        }
        MultimodalEmbedding::new(patches, self.grid).expect("grid matches patch count")
    }
}

/// Synthetic provider: each case is a hotspot layout encoded on demand.
#[derive(Debug, Clone)]
pub struct SyntheticHotspotProvider {
    encoder: HotspotEncoder,
    cases: BTreeMap<String, (Vec<Hotspot>, f64, u64)>,
}

impl SyntheticHotspotProvider {
    pub fn new(encoder: HotspotEncoder) -> Self {
        Self {
            encoder,
            cases: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, case_id: &str, hotspots: Vec<Hotspot>, noise_scale: f64, seed: u64) {
        self.cases
            .insert(case_id.to_string(), (hotspots, noise_scale, seed));
    }
}

impl EmbeddingProvider for SyntheticHotspotProvider {
    fn embedding(&self, case_id: &str) -> Result<MultimodalEmbedding> {
        let (hotspots, noise, seed) = self
            .cases
            .get(case_id)
            .ok_or_else(|| ModelError::UnknownCase(case_id.to_string()))?;
        Ok(self.encoder.encode(hotspots, *noise, *seed))
    }
}

/// Precomputed embeddings keyed by case id, persisted in the container format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    entries: BTreeMap<String, MultimodalEmbedding>,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    kind: String,
    grid: (usize, usize),
    d_model: usize,
}

const STORE_KIND: &str = "embeddings";

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case_id: &str, embedding: MultimodalEmbedding) {
        self.entries.insert(case_id.to_string(), embedding);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_container(&self) -> Result<Container> {
        let first = self
            .entries
            .values()
            .next()
            .ok_or_else(|| ModelError::Format("no embeddings to write".into()))?;
        let (grid, d_model) = (first.grid(), first.width());
        if let Some((id, _)) = self
            .entries
            .iter()
            .find(|(_, e)| e.grid() != grid || e.width() != d_model)
        {
            return Err(ModelError::Shape(format!(
                "embedding '{id}' differs in shape from the rest of the store"
            )));
        }
        let header = serde_json::to_value(StoreHeader {
            kind: STORE_KIND.into(),
            grid,
            d_model,
        })
        .expect("header serializes");
        let tensors = self
            .entries
            .iter()
            .map(|(id, e)| Tensor::from_array(id, e.patches()))
            .collect();
        Ok(Container { header, tensors })
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        let header: StoreHeader = serde_json::from_value(container.header.clone())
            .map_err(|e| ModelError::Format(format!("embedding header: {e}")))?;
        if header.kind != STORE_KIND {
            return Err(ModelError::Format(format!(
                "expected an '{STORE_KIND}' container, found '{}'",
                header.kind
            )));
        }
        let mut store = Self::new();
        for t in &container.tensors {
            let patches = t.to_array()?;
            if patches.ncols() != header.d_model {
                return Err(ModelError::Shape(format!(
                    "embedding '{}' has width {}, header says {}",
                    t.name,
                    patches.ncols(),
                    header.d_model
                )));
            }
            store.insert(&t.name, MultimodalEmbedding::new(patches, header.grid)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write_file(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read_file(path)?)
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn embedding(&self, case_id: &str) -> Result<MultimodalEmbedding> {
        self.entries
            .get(case_id)
            .cloned()
            .ok_or_else(|| ModelError::UnknownCase(case_id.to_string()))
    }
}
