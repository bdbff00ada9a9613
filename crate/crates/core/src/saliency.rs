//! Duration-weighted fixation heatmaps and the heatmap-level metrics.
//!
//! Each fixation contributes an isotropic Gaussian with standard deviation
//! `spread` (pixels) and amplitude equal to its duration. The summed map is
//! divided by its maximum, so every heatmap peaks at exactly 1.0.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{bootstrap_ci, BootstrapConfig};
use crate::{Error, Result, Scanpath};

/// Default mask threshold as a fraction of the map maximum.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.1;

/// Default kernel spread in pixels.
pub const DEFAULT_SPREAD: f64 = 50.0;

/// Kernels are evaluated out to this many standard deviations. At 5 sigma a
/// kernel has decayed to exp(-12.5) ~ 3.7e-6 of its amplitude.
const TRUNCATION_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FixationHeatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl FixationHeatmap {
    /// Wraps a row-major grid, dividing by its maximum.
    pub fn from_values(width: u32, height: u32, mut values: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected || expected == 0 {
            return Err(Error::InvalidArgument(format!(
                "heatmap of {width}x{height} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "heatmap values must be finite and non-negative".into(),
            ));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::InvalidArgument("heatmap is identically zero".into()));
        }
        values.iter_mut().for_each(|v| *v /= max);
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major values in `[0, 1]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: u32, row: u32) -> f64 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    /// Pixels with value at or above `threshold` (the map maximum is 1).
    pub fn mask(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v >= threshold).collect()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// Renders the duration-weighted heatmap at native image resolution.
pub fn render_heatmap(scanpath: &Scanpath, spread: f64) -> Result<FixationHeatmap> {
    render_with_radius(scanpath, spread, TRUNCATION_SIGMAS)
}

fn render_with_radius(scanpath: &Scanpath, spread: f64, sigmas: f64) -> Result<FixationHeatmap> {
    if scanpath.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let (width, height) = scanpath.image_dims();
    let (w, h) = (width as usize, height as usize);
    let mut grid = vec![0.0f64; w * h];
    let radius = sigmas * spread;
    let inv_two_var = 1.0 / (2.0 * spread * spread);
    // the kernel is separable: exp(-(dx² + dy²) / 2s²) = gx(dx) * gy(dy)
    let mut gx = Vec::with_capacity(w);
    for (i, f) in scanpath.fixations().iter().enumerate() {
        let (cx, cy) = scanpath.pixel_position(i);
        let Some((c0, c1)) = window(cx, radius, w) else { continue };
        let Some((r0, r1)) = window(cy, radius, h) else { continue };
        gx.clear();
        gx.extend((c0..c1).map(|c| {
            let d = c as f64 - cx;
            (-d * d * inv_two_var).exp()
        }));
        for r in r0..r1 {
            let d = r as f64 - cy;
            let row_weight = f.duration() * (-d * d * inv_two_var).exp();
            let row = &mut grid[r * w + c0..r * w + c1];
            for (cell, g) in row.iter_mut().zip(&gx) {
                *cell += row_weight * g;
            }
        }
    }
    FixationHeatmap::from_values(width, height, grid)
}

fn window(center: f64, radius: f64, len: usize) -> Option<(usize, usize)> {
    let lo = (center - radius).ceil().max(0.0);
    let hi = (center + radius).floor().min(len as f64 - 1.0);
    (lo <= hi).then(|| (lo as usize, hi as usize + 1))
}

/// Intersection over union of the two maps binarized at `threshold`.
/// Two empty masks agree vacuously (IoU 1).
pub fn heatmap_iou(a: &FixationHeatmap, b: &FixationHeatmap, threshold: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&va, &vb) in a.values.iter().zip(&b.values) {
        let (ma, mb) = (va >= threshold, vb >= threshold);
        inter += usize::from(ma && mb);
        union += usize::from(ma || mb);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Pearson correlation between the two maps' pixel values.
pub fn heatmap_cc(a: &FixationHeatmap, b: &FixationHeatmap) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.values.len() as f64;
    let ma = a.values.iter().sum::<f64>() / n;
    let mb = b.values.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&va, &vb) in a.values.iter().zip(&b.values) {
        let (da, db) = (va - ma, vb - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantHeatmap);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean IoU with bootstrap bounds at each spread level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub spreads: Vec<f64>,
    pub iou_means: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl SweepCurve {
    /// CSV with columns `spread,mean_iou,ci_low,ci_high`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("spread,mean_iou,ci_low,ci_high\n");
        for i in 0..self.spreads.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.spreads[i], self.iou_means[i], self.ci_low[i], self.ci_high[i]
            ));
        }
        out
    }
}

/// Per-pair IoU at every spread, then mean and bootstrap interval per spread.
///
/// `pairs` are `(prediction, ground truth)`; both members of a pair must
/// share image dimensions.
pub fn spread_sweep(
    pairs: &[(Scanpath, Scanpath)],
    spreads: &[f64],
    threshold: f64,
    bootstrap: &BootstrapConfig,
) -> Result<SweepCurve> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("spread sweep needs at least one pair".into()));
    }
    if spreads.is_empty() || spreads.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument("spreads must be positive".into()));
    }
    if spreads.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("spreads must be strictly increasing".into()));
    }
    let mut curve = SweepCurve {
        spreads: spreads.to_vec(),
        iou_means: Vec::with_capacity(spreads.len()),
        ci_low: Vec::with_capacity(spreads.len()),
        ci_high: Vec::with_capacity(spreads.len()),
    };
    for &spread in spreads {
        let ious = pairs
            .par_iter()
            .map(|(pred, gt)| {
                let a = render_heatmap(pred, spread)?;
                let b = render_heatmap(gt, spread)?;
                heatmap_iou(&a, &b, threshold)
            })
            .collect::<Vec<Result<f64>>>()
            .into_iter()
            .zip(pairs)
            .map(|(r, (_, gt))| r.map_err(|e| e.for_case(gt.case_id())))
            .collect::<Result<Vec<f64>>>()?;
        let ci = bootstrap_ci(&ious, bootstrap)?;
        curve.iou_means.push(ci.point);
        curve.ci_low.push(ci.low);
        curve.ci_high.push(ci.high);
    }
    Ok(curve)
}
