use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// A correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
}

/// Sample Pearson correlation; p-value from the t-distribution with n-2
/// degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_inputs(xs, ys)?;
    if is_constant(xs) {
        return Err(Error::ZeroVariance("first argument"));
    }
    if is_constant(ys) {
        return Err(Error::ZeroVariance("second argument"));
    }
    let r = pearson_r(xs, ys);
    Ok(Correlation {
        coefficient: r,
        p_value: t_test_p(r, xs.len()),
    })
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_inputs(xs, ys)?;
    if is_constant(xs) {
        return Err(Error::ZeroVariance("ranks of first argument"));
    }
    if is_constant(ys) {
        return Err(Error::ZeroVariance("ranks of second argument"));
    }
    let rho = pearson_r(&average_ranks(xs), &average_ranks(ys));
    Ok(Correlation {
        coefficient: rho,
        p_value: t_test_p(rho, xs.len()),
    })
}

/// Exact two-sided permutation p-value for Spearman's rho, for n <= 10.
pub fn spearman_permutation_p(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let observed = spearman(xs, ys)?.coefficient.abs();
    let n = xs.len();
    if n > 10 {
        return Err(Error::InvalidArgument(format!(
            "exact permutation p-value limited to n <= 10, got {n}"
        )));
    }
    let rx = average_ranks(xs);
    let mut ry = average_ranks(ys);
    let tol = 1e-12;
    let (mut extreme, mut total) = (0u64, 0u64);
    // Heap's algorithm over the y ranks.
    let mut c = vec![0usize; n];
    let mut visit = |perm: &[f64]| {
        total += 1;
        if pearson_r(&rx, perm).abs() >= observed - tol {
            extreme += 1;
        }
    };
    visit(&ry);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            visit(&ry);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 observations, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite observation".into()));
    }
    Ok(())
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = super::mean(xs);
    let my = super::mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // sqrt(s * s) == s in IEEE arithmetic, so self-correlation is exactly 1
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}
