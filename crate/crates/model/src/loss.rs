//! Spatio-temporal L1 loss on reparametrized samples plus padding
//! cross-entropy, with analytic gradients with respect to the head outputs.

use rand::Rng;
use rand_distr::StandardNormal;

use gazebench_core::FixationQuadSequence;

use crate::network::GaussianHeadOutput;
use crate::{ModelError, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// `mean + exp(0.5 * logvar) * eps`.
pub fn reparam_sample(mean: f64, logvar: f64, eps: f64) -> f64 {
    mean + (0.5 * logvar).exp() * eps
}

/// Partial derivatives of [`reparam_sample`] as `(d/dmean, d/dlogvar)`.
pub fn reparam_sample_grad(logvar: f64, eps: f64) -> (f64, f64) {
    (1.0, 0.5 * eps * (0.5 * logvar).exp())
}

/// Standard-normal draws for the x, y and t samples of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub eps_x: Vec<f64>,
    pub eps_y: Vec<f64>,
    pub eps_t: Vec<f64>,
}

impl Noise {
    pub fn zeros(rows: usize) -> Self {
        Self {
            eps_x: vec![0.0; rows],
            eps_y: vec![0.0; rows],
            eps_t: vec![0.0; rows],
        }
    }

    /// Draws row by row in (x, y, t) order.
    pub fn sample<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let mut n = Self::zeros(rows);
        for i in 0..rows {
            n.eps_x[i] = rng.sample(StandardNormal);
            n.eps_y[i] = rng.sample(StandardNormal);
            n.eps_t[i] = rng.sample(StandardNormal);
        }
        n
    }

    pub fn len(&self) -> usize {
        self.eps_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub spatial: f64,
    pub validity: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.total += weight * other.total;
        self.spatial += weight * other.spatial;
        self.validity += weight * other.validity;
    }
}

/// Gradient of one case's loss with respect to each head output.
/// `pad_prob` is the derivative with respect to the padding probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub mean_x: Vec<f64>,
    pub logvar_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub logvar_y: Vec<f64>,
    pub mean_t: Vec<f64>,
    pub logvar_t: Vec<f64>,
    pub pad_prob: Vec<f64>,
}

impl HeadGradient {
    fn zeros(rows: usize) -> Self {
        Self {
            mean_x: vec![0.0; rows],
            logvar_x: vec![0.0; rows],
            mean_y: vec![0.0; rows],
            logvar_y: vec![0.0; rows],
            mean_t: vec![0.0; rows],
            logvar_t: vec![0.0; rows],
            pad_prob: vec![0.0; rows],
        }
    }

    pub fn norm(&self) -> f64 {
        [&self.mean_x, &self.logvar_x, &self.mean_y, &self.logvar_y, &self.mean_t, &self.logvar_t, &self.pad_prob]
            .iter()
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn check_shapes(out: &GaussianHeadOutput, noise: &Noise, gt: &FixationQuadSequence) -> Result<()> {
    let f = gt.max_len();
    if out.len() != f || noise.len() != f {
        return Err(ModelError::Shape(format!(
            "head output has {} rows, noise {}, ground truth {}",
            out.len(),
            noise.len(),
            f
        )));
    }
    if gt.valid_len() == 0 {
        return Err(ModelError::EmptyGroundTruth);
    }
    Ok(())
}

/// Reparametrized samples of the valid rows as `(x, y, t_seconds)`.
fn samples(out: &GaussianHeadOutput, noise: &Noise, i: usize) -> [(f64, f64, f64); 3] {
    [
        (out.mean_x[i], out.logvar_x[i], noise.eps_x[i]),
        (out.mean_y[i], out.logvar_y[i], noise.eps_y[i]),
        (out.mean_t[i], out.logvar_t[i], noise.eps_t[i]),
    ]
}

fn targets(gt: &FixationQuadSequence, i: usize) -> [f64; 3] {
    let r = gt.rows()[i];
    [r.x, r.y, r.t / 1000.0]
}

/// Loss of a single case and its gradient with respect to the head outputs.
pub fn case_loss(
    out: &GaussianHeadOutput,
    noise: &Noise,
    gt: &FixationQuadSequence,
) -> Result<(LossBreakdown, HeadGradient)> {
    check_shapes(out, noise, gt)?;
    let f = gt.max_len();
    let valid = gt.valid_len();
    let inv_l = 1.0 / valid as f64;
    let mut grad = HeadGradient::zeros(f);

    let mut spatial = 0.0;
    for i in 0..valid {
        let target = targets(gt, i);
        let gm = [&mut grad.mean_x, &mut grad.mean_y, &mut grad.mean_t];
        let gl = [&mut grad.logvar_x, &mut grad.logvar_y, &mut grad.logvar_t];
        for (k, ((mean, logvar, eps), g)) in samples(out, noise, i).into_iter().zip(target).enumerate() {
            let residual = reparam_sample(mean, logvar, eps) - g;
            spatial += residual.abs();
            // Subgradient 0 at the kink.
            let ds = inv_l * if residual > 0.0 { 1.0 } else if residual < 0.0 { -1.0 } else { 0.0 };
            let (dm, dlv) = reparam_sample_grad(logvar, eps);
            gm[k][i] = ds * dm;
            gl[k][i] = ds * dlv;
        }
    }
    spatial *= inv_l;

    let inv_f = 1.0 / f as f64;
    let mut validity = 0.0;
    for (i, row) in gt.rows().iter().enumerate() {
        let v = row.v();
        let raw = out.pad_prob[i];
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        validity -= v * p.ln() + (1.0 - v) * (1.0 - p).ln();
        if raw > PROB_CLAMP && raw < 1.0 - PROB_CLAMP {
            grad.pad_prob[i] = inv_f * (-v / p + (1.0 - v) / (1.0 - p));
        }
    }
    validity *= inv_f;

    Ok((
        LossBreakdown {
            total: spatial + validity,
            spatial,
            validity,
        },
        grad,
    ))
}

/// Signed distances of every L1 term from its kink.
pub fn kink_residuals(out: &GaussianHeadOutput, noise: &Noise, gt: &FixationQuadSequence) -> Result<Vec<f64>> {
    check_shapes(out, noise, gt)?;
    let mut r = Vec::with_capacity(3 * gt.valid_len());
    for i in 0..gt.valid_len() {
        for ((mean, logvar, eps), g) in samples(out, noise, i).into_iter().zip(targets(gt, i)) {
            r.push(reparam_sample(mean, logvar, eps) - g);
        }
    }
    Ok(r)
}

/// Mean loss over `N` cases.
pub fn loss_total(cases: &[(&GaussianHeadOutput, &Noise, &FixationQuadSequence)]) -> Result<LossBreakdown> {
    if cases.is_empty() {
        return Err(ModelError::Config("loss of an empty batch".into()));
    }
    let w = 1.0 / cases.len() as f64;
    let mut total = LossBreakdown::default();
    for (out, noise, gt) in cases {
        total.accumulate(&case_loss(out, noise, gt)?.0, w);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gazebench_core::Scanpath;
    use proptest::prelude::*;

    fn uniform_output(f: usize, p: f64) -> GaussianHeadOutput {
        GaussianHeadOutput {
            mean_x: vec![0.0; f],
            logvar_x: vec![0.0; f],
            mean_y: vec![0.0; f],
            logvar_y: vec![0.0; f],
            mean_t: vec![0.0; f],
            logvar_t: vec![0.0; f],
            pad_prob: vec![p; f],
        }
    }

    fn sequence(points: &[(f64, f64, f64)], f: usize) -> FixationQuadSequence {
        let px: Vec<_> = points.iter().map(|&(x, y, t)| (x * 1000.0, y * 1000.0, t)).collect();
        Scanpath::from_pixels("c", &px, (1000, 1000)).unwrap().pad_truncate(f).unwrap()
    }

    #[test]
    fn reparam_examples() {
        assert_eq!(reparam_sample(0.3, 1.7, 0.0), 0.3);
        assert_eq!(reparam_sample(0.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn reparam_logvar_derivative_matches_central_difference() {
        let h = 1e-5;
        for &(mean, logvar, eps) in &[(0.1, -1.0, 0.7), (0.0, 0.5, -1.3), (2.0, 2.0, 0.01)] {
            let numeric = (reparam_sample(mean, logvar + h, eps) - reparam_sample(mean, logvar - h, eps)) / (2.0 * h);
            let (_, analytic) = reparam_sample_grad(logvar, eps);
            assert!((numeric - analytic).abs() / analytic.abs() < 1e-6);
        }
    }

    #[test]
    fn hand_computed_spatial_loss() {
        let gt = sequence(&[(0.5, 0.5, 1000.0)], 1);
        let mut out = uniform_output(1, 0.0);
        out.mean_x[0] = 0.6;
        out.mean_y[0] = 0.4;
        out.mean_t[0] = 0.8;
        let (loss, _) = case_loss(&out, &Noise::zeros(1), &gt).unwrap();
        assert!((loss.spatial - 0.4).abs() < 1e-9);
    }

    #[test]
    fn uniform_half_probability_gives_ln2() {
        let gt = sequence(&[(0.2, 0.3, 200.0), (0.4, 0.1, 300.0)], 6);
        let (loss, _) = case_loss(&uniform_output(6, 0.5), &Noise::zeros(6), &gt).unwrap();
        assert!((loss.validity - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction_is_a_minimum() {
        let pts = [(0.2, 0.3, 200.0), (0.4, 0.1, 300.0)];
        let gt = sequence(&pts, 4);
        let mut out = uniform_output(4, 1.0);
        for (i, r) in gt.rows().iter().take(2).enumerate() {
            out.mean_x[i] = r.x;
            out.mean_y[i] = r.y;
            out.mean_t[i] = r.t / 1000.0;
            out.pad_prob[i] = 0.0;
        }
        let (loss, grad) = case_loss(&out, &Noise::zeros(4), &gt).unwrap();
        assert_eq!(loss.spatial, 0.0);
        assert!(loss.validity <= 2e-7);
        assert!(grad.norm() < 1e-6);
    }

    #[test]
    fn empty_ground_truth_is_rejected() {
        let gt = Scanpath::new("c", 10, 10, vec![]).unwrap().pad_truncate(3).unwrap();
        let err = case_loss(&uniform_output(3, 0.5), &Noise::zeros(3), &gt).unwrap_err();
        assert_eq!(err.to_string(), "loss undefined for empty ground truth");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let gt = sequence(&[(0.5, 0.5, 100.0)], 3);
        assert!(matches!(case_loss(&uniform_output(2, 0.5), &Noise::zeros(2), &gt), Err(ModelError::Shape(_))));
    }

    fn arb_case(f: usize) -> impl Strategy<Value = (GaussianHeadOutput, Noise, FixationQuadSequence)> {
        let row = (-1.0..2.0f64, -2.0..1.0f64, -2.0..2.0f64);
        (
            prop::collection::vec(row, f * 3),
            prop::collection::vec(0.01..0.99f64, f),
            prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 1.0..900.0f64), 1..=f),
        )
            .prop_map(move |(rows, probs, pts)| {
                let mut out = uniform_output(f, 0.5);
                let mut noise = Noise::zeros(f);
                for i in 0..f {
                    let [(mx, lx, ex), (my, ly, ey), (mt, lt, et)] = [rows[3 * i], rows[3 * i + 1], rows[3 * i + 2]];
                    out.mean_x[i] = mx;
                    out.logvar_x[i] = lx;
                    noise.eps_x[i] = ex;
                    out.mean_y[i] = my;
                    out.logvar_y[i] = ly;
                    noise.eps_y[i] = ey;
                    out.mean_t[i] = mt;
                    out.logvar_t[i] = lt;
                    noise.eps_t[i] = et;
                }
                out.pad_prob = probs;
                (out, noise, sequence(&pts, f))
            })
    }

    proptest! {
        #[test]
        fn head_gradient_matches_finite_differences((out, noise, gt) in arb_case(4)) {
            let (_, grad) = case_loss(&out, &noise, &gt).unwrap();
            let residuals = kink_residuals(&out, &noise, &gt).unwrap();
            prop_assume!(residuals.iter().all(|r| r.abs() > 1e-3));
            let h = 1e-6;
            let loss_at = |o: &GaussianHeadOutput| case_loss(o, &noise, &gt).unwrap().0.total;
            type Field = fn(&mut GaussianHeadOutput) -> &mut Vec<f64>;
            let fields: [(Field, &Vec<f64>); 7] = [
                (|o| &mut o.mean_x, &grad.mean_x),
                (|o| &mut o.logvar_x, &grad.logvar_x),
                (|o| &mut o.mean_y, &grad.mean_y),
                (|o| &mut o.logvar_y, &grad.logvar_y),
                (|o| &mut o.mean_t, &grad.mean_t),
                (|o| &mut o.logvar_t, &grad.logvar_t),
                (|o| &mut o.pad_prob, &grad.pad_prob),
            ];
            for (field, analytic) in fields {
                for i in 0..4 {
                    let mut plus = out.clone();
                    field(&mut plus)[i] += h;
                    let mut minus = out.clone();
                    field(&mut minus)[i] -= h;
                    let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                    prop_assert!((numeric - analytic[i]).abs() < 1e-6, "{} vs {}", numeric, analytic[i]);
                }
            }
        }

        #[test]
        fn batch_loss_ignores_case_order(a in arb_case(3), b in arb_case(3), c in arb_case(3)) {
            let forward = [(&a.0, &a.1, &a.2), (&b.0, &b.1, &b.2), (&c.0, &c.1, &c.2)];
            let backward = [forward[2], forward[0], forward[1]];
            let x = loss_total(&forward).unwrap().total;
            let y = loss_total(&backward).unwrap().total;
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn validity_loss_is_minimal_at_clamped_indicator((out, noise, gt) in arb_case(5)) {
            let (loss, _) = case_loss(&out, &noise, &gt).unwrap();
            let mut ideal = out.clone();
            for (i, r) in gt.rows().iter().enumerate() {
                ideal.pad_prob[i] = if r.padding { 1.0 - PROB_CLAMP } else { PROB_CLAMP };
            }
            let (best, _) = case_loss(&ideal, &noise, &gt).unwrap();
            prop_assert!(best.validity <= loss.validity);
            prop_assert!(best.validity < 2e-7);
        }
    }
}
