//! Synthetic hotspot corpora with known regions of interest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use gazebench_core::Scanpath;
use gazebench_model::{EmbeddingStore, Hotspot, HotspotEncoder, TrainingCase};

use crate::corpus::{CorpusCase, CorpusManifest, Split};
use crate::error::{CliError, Result};

pub const IMAGE_SIZE: u32 = 512;
pub const GRID: (usize, usize) = (8, 8);
/// Fixations per unit of hotspot weight.
pub const FIXATIONS_PER_WEIGHT: f64 = 4.0;
/// Fixation duration per unit of hotspot weight.
pub const MS_PER_WEIGHT: f64 = 150.0;
/// Positional jitter (normalized units) per unit of `noise_scale`.
pub const POSITION_JITTER: f64 = 0.05;
/// Relative duration jitter per unit of `noise_scale`.
pub const DURATION_JITTER: f64 = 0.2;
/// Embedding feature noise per unit of `noise_scale`.
pub const EMBEDDING_JITTER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCaseParams {
    pub case_id: String,
    pub hotspots: Vec<Hotspot>,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticCaseParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CliError::Validation(format!("synthetic case '{}': {m}", self.case_id)));
        if self.hotspots.is_empty() {
            return fail("needs at least one hotspot");
        }
        for h in &self.hotspots {
            if !(h.weight.is_finite() && h.weight > 0.0) {
                return fail("hotspot weights must be positive");
            }
            if !((0.0..=1.0).contains(&h.cx) && (0.0..=1.0).contains(&h.cy)) {
                return fail("hotspot centers must lie in the unit square");
            }
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return fail("noise_scale must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub cases: Vec<CorpusCase>,
    pub embeddings: EmbeddingStore,
}

impl SyntheticCorpus {
    /// Pairs each case with its embedding and padded target.
    pub fn training_cases(&self, split: Option<Split>, max_fixations: usize) -> Result<Vec<TrainingCase>> {
        training_cases(
            self.cases.iter().filter(|c| split.is_none() || c.split == split),
            &self.embeddings,
            max_fixations,
        )
    }

    pub fn manifest(&self, dataset_name: &str) -> Result<CorpusManifest> {
        CorpusManifest::for_cases(dataset_name, &self.cases)
    }
}

pub fn training_cases<'a>(
    cases: impl IntoIterator<Item = &'a CorpusCase>,
    embeddings: &EmbeddingStore,
    max_fixations: usize,
) -> Result<Vec<TrainingCase>> {
    use gazebench_model::EmbeddingProvider;
    cases
        .into_iter()
        .map(|c| {
            let id = c.scanpath.case_id();
            Ok(TrainingCase {
                case_id: id.to_string(),
                embedding: embeddings.embedding(id)?,
                target: c.scanpath.pad_truncate(max_fixations)?,
            })
        })
        .collect()
}

/// Ground truth for one case: hotspots in descending weight, each visited by
/// `round(4 w)` fixations of about `150 w` ms, truncated to `max_fixations`.
pub fn ground_truth(params: &SyntheticCaseParams, max_fixations: usize) -> Result<Scanpath> {
    params.validate()?;
    let mut hotspots = params.hotspots.clone();
    hotspots.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = f64::from(IMAGE_SIZE);
    let mut pixels = Vec::new();
    'outer: for h in &hotspots {
        let count = (FIXATIONS_PER_WEIGHT * h.weight).round().max(1.0) as usize;
        for _ in 0..count {
            if pixels.len() == max_fixations {
                break 'outer;
            }
            let mut jitter = || -> f64 { params.noise_scale * rng.sample::<f64, _>(StandardNormal) };
            let x = (h.cx + POSITION_JITTER * jitter()).clamp(0.0, 1.0);
            let y = (h.cy + POSITION_JITTER * jitter()).clamp(0.0, 1.0);
            let ms = (MS_PER_WEIGHT * h.weight * (1.0 + DURATION_JITTER * jitter())).max(1.0);
            // The image size is a power of two, so pixel scaling is exact.
            pixels.push((x * size, y * size, ms));
        }
    }
    Ok(Scanpath::from_pixels(&params.case_id, &pixels, (IMAGE_SIZE, IMAGE_SIZE))?)
}

pub fn generate_synthetic(params: &[SyntheticCaseParams], max_fixations: usize, d_model: usize) -> Result<SyntheticCorpus> {
    let encoder = HotspotEncoder::new(GRID, d_model);
    let mut embeddings = EmbeddingStore::new();
    let mut cases = Vec::with_capacity(params.len());
    for case in params {
        let scanpath = ground_truth(case, max_fixations)?;
        let embedding_seed = case.seed ^ 0x9e37_79b9_7f4a_7c15;
        embeddings.insert(
            &case.case_id,
            encoder.encode(&case.hotspots, EMBEDDING_JITTER * case.noise_scale, embedding_seed),
        );
        cases.push(CorpusCase { scanpath, split: None });
    }
    Ok(SyntheticCorpus { cases, embeddings })
}

/// `n` random cases with 1 to 3 hotspots of weight 1 to 3.
pub fn random_params(prefix: &str, n: usize, noise_scale: f64, seed: u64) -> Vec<SyntheticCaseParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.random_range(1..=3);
            let hotspots = (0..k)
                .map(|_| Hotspot {
                    cx: rng.random_range(0.1..0.9),
                    cy: rng.random_range(0.1..0.9),
                    weight: rng.random_range(1.0..3.0),
                })
                .collect();
            SyntheticCaseParams {
                case_id: format!("{prefix}{i:04}"),
                hotspots,
                noise_scale,
                seed: rng.random(),
            }
        })
        .collect()
}

/// Train/test corpus generated from one seed, with split tags set.
pub fn split_corpus(
    n_train: usize,
    n_test: usize,
    noise_scale: f64,
    seed: u64,
    max_fixations: usize,
    d_model: usize,
) -> Result<SyntheticCorpus> {
    let params = random_params("synth-", n_train + n_test, noise_scale, seed);
    let mut corpus = generate_synthetic(&params, max_fixations, d_model)?;
    for (i, c) in corpus.cases.iter_mut().enumerate() {
        c.split = Some(if i < n_train { Split::Train } else { Split::Test });
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(hotspots: Vec<Hotspot>, noise_scale: f64) -> SyntheticCaseParams {
        SyntheticCaseParams { case_id: "s".into(), hotspots, noise_scale, seed: 11 }
    }

    #[test]
    fn single_noise_free_hotspot_pins_every_fixation() {
        let s = ground_truth(&params(vec![Hotspot { cx: 0.25, cy: 0.75, weight: 2.0 }], 0.0), 50).unwrap();
        assert_eq!(s.len(), 8);
        for f in s.fixations() {
            assert_eq!((f.x(), f.y(), f.duration()), (0.25, 0.75, 300.0));
        }
    }

    #[test]
    fn heavier_hotspot_comes_first_and_twice_as_often() {
        let hs = vec![
            Hotspot { cx: 0.8, cy: 0.2, weight: 1.0 },
            Hotspot { cx: 0.1, cy: 0.5, weight: 2.0 },
        ];
        let s = ground_truth(&params(hs, 0.0), 50).unwrap();
        let at_heavy: Vec<bool> = s.fixations().iter().map(|f| f.x() < 0.5).collect();
        assert_eq!(at_heavy, [vec![true; 8], vec![false; 4]].concat());
    }

    #[test]
    fn truncates_to_max_fixations() {
        let s = ground_truth(&params(vec![Hotspot { cx: 0.5, cy: 0.5, weight: 3.0 }], 1.0), 5).unwrap();
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = split_corpus(3, 2, 1.0, 9, 50, 32).unwrap();
        let b = split_corpus(3, 2, 1.0, 9, 50, 32).unwrap();
        assert_eq!(crate::corpus::format_corpus(&a.cases), crate::corpus::format_corpus(&b.cases));
        assert_eq!(a.embeddings.to_container().unwrap().to_bytes(), b.embeddings.to_container().unwrap().to_bytes());
        assert_eq!(a.training_cases(Some(Split::Test), 50).unwrap().len(), 2);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(params(vec![], 0.0).validate().is_err());
        assert!(params(vec![Hotspot { cx: 0.5, cy: 0.5, weight: 0.0 }], 0.0).validate().is_err());
        assert!(params(vec![Hotspot { cx: 1.5, cy: 0.5, weight: 1.0 }], 0.0).validate().is_err());
    }
}
