//! Directional finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gazebench_core::FixationQuadSequence;

use crate::embedding::MultimodalEmbedding;
use crate::loss::{kink_residuals, Noise};
use crate::network::{GazeModel, ParamGroup};
use crate::{ModelError, Result};

pub const MAX_RESAMPLES: usize = 10;
/// L1 residuals closer than this many steps to zero count as near a kink.
pub const KINK_MARGIN_STEPS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Arguments of every non-smooth term; the loss has a kink where one is zero.
    pub kink_residuals: Vec<f64>,
}

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn parameters(&self) -> Vec<f64>;
    /// Named groups of parameter indices; directions are drawn within a group.
    fn groups(&self) -> Vec<(String, Vec<usize>)>;
    fn evaluate(&self, params: &[f64]) -> Result<Evaluation>;
    /// Moves to a fresh evaluation point after a kink was detected.
    fn resample(&mut self, attempt: usize);
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub directions: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, directions: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per group.
    pub per_group: Vec<(String, f64)>,
    pub directions_checked: usize,
    pub resamples: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn same_side(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.signum() == y.signum())
}

pub fn grad_check(objective: &mut dyn Objective, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&cfg.step) {
        return Err(ModelError::Config(format!("step {} outside [1e-6, 1e-3]", cfg.step)));
    }
    let groups: Vec<_> = objective.groups().into_iter().filter(|(_, idx)| !idx.is_empty()).collect();
    if groups.is_empty() || cfg.directions == 0 {
        return Err(ModelError::Config("nothing to check".into()));
    }
    let margin = KINK_MARGIN_STEPS * cfg.step;
    'attempt: for attempt in 0..=MAX_RESAMPLES {
        if attempt > 0 {
            objective.resample(attempt);
        }
        let theta = objective.parameters();
        let base = objective.evaluate(&theta)?;
        if base.kink_residuals.iter().any(|r| r.abs() <= margin) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut per_group: Vec<(String, f64)> = groups.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
        for d in 0..cfg.directions {
            let g = d % groups.len();
            let idx = &groups[g].1;
            let raw: Vec<f64> = idx.iter().map(|_| rng.sample(StandardNormal)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            let mut analytic = 0.0;
            for (&i, &r) in idx.iter().zip(&raw) {
                let u = r / norm;
                plus[i] += cfg.step * u;
                minus[i] -= cfg.step * u;
                analytic += base.gradient[i] * u;
            }
            let (ep, em) = (objective.evaluate(&plus)?, objective.evaluate(&minus)?);
            if !same_side(&base.kink_residuals, &ep.kink_residuals)
                || !same_side(&base.kink_residuals, &em.kink_residuals)
            {
                continue 'attempt;
            }
            let numeric = (ep.loss - em.loss) / (2.0 * cfg.step);
            let err = relative_error(analytic, numeric);
            per_group[g].1 = per_group[g].1.max(err);
        }
        let max_relative_error = per_group.iter().map(|(_, e)| *e).fold(0.0, f64::max);
        return Ok(GradCheckReport {
            max_relative_error,
            per_group,
            directions_checked: cfg.directions,
            resamples: attempt,
        });
    }
    Err(ModelError::KinkProximity { attempts: MAX_RESAMPLES, margin })
}

/// Full model loss over a fixed batch, with noise redrawn on resample.
pub struct ModelObjective {
    model: GazeModel,
    cases: Vec<(MultimodalEmbedding, FixationQuadSequence)>,
    noise: Vec<Noise>,
    seed: u64,
}

impl ModelObjective {
    pub fn new(model: GazeModel, cases: Vec<(MultimodalEmbedding, FixationQuadSequence)>, seed: u64) -> Self {
        let mut obj = Self { model, cases, noise: Vec::new(), seed };
        obj.draw_noise(0);
        obj
    }

    fn draw_noise(&mut self, attempt: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(attempt as u64);
        let f = self.model.config().max_fixations;
        self.noise = self.cases.iter().map(|_| Noise::sample(f, &mut rng)).collect();
    }
}

impl Objective for ModelObjective {
    fn parameters(&self) -> Vec<f64> {
        self.model.flat_parameters()
    }

    fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut decoder = Vec::new();
        let mut heads = Vec::new();
        let mut offset = 0;
        for p in self.model.parameters() {
            let range = offset..offset + p.value.len();
            match p.group {
                ParamGroup::Decoder => decoder.extend(range),
                ParamGroup::Heads => heads.extend(range),
            }
            offset += p.value.len();
        }
        vec![("decoder".into(), decoder), ("heads".into(), heads)]
    }

    fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        let mut model = self.model.clone();
        model.set_flat_parameters(params)?;
        let batch: Vec<_> = self
            .cases
            .iter()
            .zip(&self.noise)
            .map(|((m, t), n)| (m, t, n))
            .collect();
        let (loss, grads) = model.batch_gradient(&batch)?;
        let mut residuals = Vec::new();
        for (m, t, n) in &batch {
            residuals.extend(kink_residuals(&model.forward(m)?, n, t)?);
        }
        Ok(Evaluation {
            loss: loss.total,
            gradient: grads.iter().flat_map(|g| g.iter().copied()).collect(),
            kink_residuals: residuals,
        })
    }

    fn resample(&mut self, attempt: usize) {
        self.draw_noise(attempt);
    }
}
