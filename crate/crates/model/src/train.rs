//! Minibatch Adam training with per-group learning rates.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gazebench_core::FixationQuadSequence;

use crate::embedding::MultimodalEmbedding;
use crate::loss::{LossBreakdown, Noise};
use crate::network::{GazeModel, ParamGroup};
use crate::{GazeModelConfig, ModelError, OptimConfig, Result};

const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4521;
const NOISE_SALT: u64 = 0x4e4f_4953_4521_0000;

#[derive(Debug, Clone)]
pub struct TrainingCase {
    pub case_id: String,
    pub embedding: MultimodalEmbedding,
    pub target: FixationQuadSequence,
}

/// One entry of the loss trace.
///
/// `loss` is the corpus loss evaluated after the epoch with the noise fixed
/// at zero, so it only moves when parameters do. `train_loss` is the mean of
/// the sampled minibatch losses seen during the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
    pub spatial: f64,
    pub validity: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GazeModel,
    pub trace: Vec<EpochLoss>,
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &GazeModel) -> Self {
        let zeros = || {
            model
                .parameters()
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect()
        };
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, model: &mut GazeModel, grads: &[Array2<f64>], cfg: &OptimConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (k, p) in model.parameters_mut().iter_mut().enumerate() {
            let lr = match p.group {
                ParamGroup::Decoder => cfg.lr_decoder,
                ParamGroup::Heads => cfg.lr_heads,
            };
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
                });
        }
    }
}

/// Noise for `case` during `epoch`; independent of batch composition.
fn training_noise(seed: u64, epoch: usize, case: usize, rows: usize) -> Noise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
    rng.set_stream(((epoch as u64) << 32) | case as u64);
    Noise::sample(rows, &mut rng)
}

/// Noise-free mean loss over `cases`.
pub fn evaluate_loss(model: &GazeModel, cases: &[TrainingCase]) -> Result<LossBreakdown> {
    let zero = Noise::zeros(model.config().max_fixations);
    let batch: Vec<_> = cases.iter().map(|c| (&c.embedding, &c.target, &zero)).collect();
    model.batch_loss(&batch)
}

pub fn train(cases: &[TrainingCase], cfg: &GazeModelConfig, optim: &OptimConfig) -> Result<TrainOutcome> {
    train_with_progress(cases, cfg, optim, |_| {})
}

/// Like [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    cases: &[TrainingCase],
    cfg: &GazeModelConfig,
    optim: &OptimConfig,
    mut progress: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome> {
    optim.validate()?;
    if cases.is_empty() {
        return Err(ModelError::Config("training corpus is empty".into()));
    }
    let mut model = GazeModel::new(cfg.clone())?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(optim.seed ^ SHUFFLE_SALT);
    let mut trace = Vec::with_capacity(optim.epochs);

    for epoch in 1..=optim.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_sum = 0.0;
        for chunk in order.chunks(optim.batch_size) {
            let noises: Vec<Noise> = chunk
                .iter()
                .map(|&i| training_noise(optim.seed, epoch, i, cfg.max_fixations))
                .collect();
            let batch: Vec<_> = chunk
                .iter()
                .zip(&noises)
                .map(|(&i, n)| (&cases[i].embedding, &cases[i].target, n))
                .collect();
            let (loss, grads) = model.batch_gradient(&batch)?;
            if !loss.total.is_finite() {
                return Err(ModelError::Diverged { epoch, loss: loss.total, trace });
            }
            train_sum += loss.total * chunk.len() as f64;
            adam.update(&mut model, &grads, optim);
        }
        let eval = evaluate_loss(&model, cases)?;
        let entry = EpochLoss {
            epoch,
            loss: eval.total,
            spatial: eval.spatial,
            validity: eval.validity,
            train_loss: train_sum / cases.len() as f64,
        };
        if !entry.loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: entry.loss, trace });
        }
        progress(&entry);
        trace.push(entry);
    }
    Ok(TrainOutcome { model, trace })
}
