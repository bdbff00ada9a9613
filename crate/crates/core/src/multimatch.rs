//! MultiMatch: vector-based scanpath similarity along five dimensions.
//!
//! Both scanpaths are (optionally) simplified, turned into saccade vectors,
//! and aligned along the cheapest monotone path through the matrix of
//! vector-difference norms. Shape, direction, length, position and duration
//! similarities are averaged over the aligned pairs. All geometry lives in
//! the unit square, so every distance is normalized by its diagonal.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::{Error, Fixation, Result, Scanpath};

/// Diagonal of the unit square.
const DIAGONAL: f64 = SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaccadeVector {
    pub dx: f64,
    pub dy: f64,
    pub amplitude: f64,
    pub start_fixation_index: usize,
}

impl SaccadeVector {
    fn new(dx: f64, dy: f64, start_fixation_index: usize) -> Self {
        Self {
            dx,
            dy,
            amplitude: dx.hypot(dy),
            start_fixation_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiMatchConfig {
    /// Saccades turning by less than this many degrees may merge.
    pub direction_threshold: f64,
    /// Saccades shorter than this fraction of the diagonal may merge.
    pub amplitude_threshold: f64,
    /// Only fixations shorter than this (ms) can be merged away.
    pub duration_threshold: f64,
    pub simplify: bool,
}

impl Default for MultiMatchConfig {
    fn default() -> Self {
        Self {
            direction_threshold: 45.0,
            amplitude_threshold: 0.1,
            duration_threshold: 300.0,
            simplify: true,
        }
    }
}

impl MultiMatchConfig {
    fn validate(&self) -> Result<()> {
        let thresholds = [
            self.direction_threshold,
            self.amplitude_threshold,
            self.duration_threshold,
        ];
        if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument(
                "MultiMatch thresholds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiMatchScores {
    pub shape: f64,
    pub direction: f64,
    pub length: f64,
    pub position: f64,
    pub duration: f64,
    pub mean_mm: f64,
}

impl MultiMatchScores {
    pub fn dimensions(&self) -> [f64; 5] {
        [
            self.shape,
            self.direction,
            self.length,
            self.position,
            self.duration,
        ]
    }
}

pub fn to_saccade_vectors(s: &Scanpath) -> Result<Vec<SaccadeVector>> {
    let f = s.fixations();
    if f.len() < 2 {
        return Err(Error::ScanpathTooShort);
    }
    Ok(f.windows(2)
        .enumerate()
        .map(|(i, w)| SaccadeVector::new(w[1].x() - w[0].x(), w[1].y() - w[0].y(), i))
        .collect())
}

/// Angle between two vectors in `[0, pi]`. A zero vector against a zero
/// vector is 0; a zero vector against anything else is pi/2.
fn angle_between(a: (f64, f64), b: (f64, f64)) -> f64 {
    let a_zero = a.0 == 0.0 && a.1 == 0.0;
    let b_zero = b.0 == 0.0 && b.1 == 0.0;
    match (a_zero, b_zero) {
        (true, true) => 0.0,
        (true, false) | (false, true) => FRAC_PI_2,
        _ => {
            let cross = a.0 * b.1 - a.1 * b.0;
            let dot = a.0 * b.0 + a.1 * b.1;
            cross.abs().atan2(dot)
        }
    }
}

/// Merges consecutive saccades until no merge applies.
///
/// Saccades `i` and `i+1` merge when the fixation between them is shorter
/// than `duration_threshold` and either they turn by less than
/// `direction_threshold` or both are shorter than
/// `amplitude_threshold * diagonal`. The intervening fixation is removed and
/// its duration is added to the following fixation.
pub fn simplify(s: &Scanpath, cfg: &MultiMatchConfig) -> Result<Scanpath> {
    cfg.validate()?;
    if s.len() < 2 {
        return Err(Error::ScanpathTooShort);
    }
    let max_angle = cfg.direction_threshold.to_radians();
    let max_amplitude = cfg.amplitude_threshold * DIAGONAL;
    let mut points: Vec<(f64, f64, f64)> = s
        .fixations()
        .iter()
        .map(|f| (f.x(), f.y(), f.duration()))
        .collect();
    loop {
        let mergeable = (1..points.len().saturating_sub(1)).find(|&mid| {
            let (p0, p1, p2) = (points[mid - 1], points[mid], points[mid + 1]);
            if p1.2 >= cfg.duration_threshold {
                return false;
            }
            let u = (p1.0 - p0.0, p1.1 - p0.1);
            let v = (p2.0 - p1.0, p2.1 - p1.1);
            let turn = angle_between(u, v);
            let short = u.0.hypot(u.1) < max_amplitude && v.0.hypot(v.1) < max_amplitude;
            turn < max_angle || short
        });
        let Some(mid) = mergeable else { break };
        let pooled = points[mid].2;
        points[mid + 1].2 += pooled;
        points.remove(mid);
    }
    let fixations = points
        .into_iter()
        .map(|(x, y, d)| Fixation::new(x, y, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(s.with_fixations(fixations))
}

fn vector_distance(a: &SaccadeVector, b: &SaccadeVector) -> f64 {
    (a.dx - b.dx).hypot(a.dy - b.dy)
}

/// Cost matrix of vector-difference norms, `a.len()` rows by `b.len()` columns.
pub fn cost_matrix(a: &[SaccadeVector], b: &[SaccadeVector]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|u| b.iter().map(|v| vector_distance(u, v)).collect())
        .collect()
}

/// Sum of the cost cells visited by `path`.
pub fn path_cost(cost: &[Vec<f64>], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| cost[i][j]).sum()
}

/// Cheapest monotone path from `(0, 0)` to `(n-1, m-1)` through the cost
/// matrix, stepping right, down or diagonally. Ties prefer the diagonal.
pub fn align(a: &[SaccadeVector], b: &[SaccadeVector]) -> Result<Vec<(usize, usize)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("cannot align an empty vector list".into()));
    }
    let cost = cost_matrix(a, b);
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[i - 1][j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i][j] = best_prev + cost[i][j];
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[i - 1][j - 1];
            let up = acc[i - 1][j];
            let left = acc[i][j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(path)
}

/// Five-dimension similarity of `p` against `g`, each in `[0, 1]`.
pub fn multimatch_scores(p: &Scanpath, g: &Scanpath, cfg: &MultiMatchConfig) -> Result<MultiMatchScores> {
    cfg.validate()?;
    if p.len() < 2 || g.len() < 2 {
        return Err(Error::ScanpathTooShort);
    }
    let (p, g) = if cfg.simplify {
        (simplify(p, cfg)?, simplify(g, cfg)?)
    } else {
        (p.clone(), g.clone())
    };
    let pv = to_saccade_vectors(&p)?;
    let gv = to_saccade_vectors(&g)?;
    let path = align(&pv, &gv)?;

    let mut sums = [0.0f64; 5];
    for &(i, j) in &path {
        let (u, v) = (&pv[i], &gv[j]);
        let fu = &p.fixations()[u.start_fixation_index];
        let fv = &g.fixations()[v.start_fixation_index];
        let direction = angle_between((u.dx, u.dy), (v.dx, v.dy));
        sums[0] += 1.0 - vector_distance(u, v) / (2.0 * DIAGONAL);
        sums[1] += 1.0 - direction / PI;
        sums[2] += 1.0 - (u.amplitude - v.amplitude).abs() / DIAGONAL;
        sums[3] += 1.0 - (fu.x() - fv.x()).hypot(fu.y() - fv.y()) / DIAGONAL;
        sums[4] += 1.0 - (fu.duration() - fv.duration()).abs() / fu.duration().max(fv.duration());
    }
    let n = path.len() as f64;
    let [shape, direction, length, position, duration] = sums.map(|s| s / n);
    Ok(MultiMatchScores {
        shape,
        direction,
        length,
        position,
        duration,
        mean_mm: (shape + direction + length + position + duration) / 5.0,
    })
}
