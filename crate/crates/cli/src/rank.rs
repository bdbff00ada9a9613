//! Case-difficulty agreement between predicted and recorded durations.

use serde::Serialize;

use gazebench_core::analytics::{pearson, rank_difficulty, spearman, Correlation, DifficultyRanking, RankedCase};
use gazebench_core::Scanpath;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremes {
    pub k: usize,
    pub hardest: Vec<RankedCase>,
    pub easiest: Vec<RankedCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub n_cases: usize,
    /// Pearson correlation of total fixation durations.
    pub pearson: Correlation,
    /// Spearman correlation of difficulty ranks.
    pub spearman: Correlation,
    pub ground_truth: DifficultyRanking,
    pub predicted: DifficultyRanking,
    pub ground_truth_extremes: Extremes,
    pub predicted_extremes: Extremes,
}

fn extremes(ranking: &DifficultyRanking, k: usize) -> Result<Extremes> {
    let k = k.min(ranking.len());
    let (hardest, easiest) = ranking.extremes(k)?;
    Ok(Extremes { k, hardest, easiest })
}

/// `pairs` are `(prediction, ground truth)` matched by case id.
pub fn rank_report(pairs: &[(&Scanpath, &Scanpath)], top_k: usize) -> Result<RankReport> {
    if pairs.len() < 3 {
        return Err(CliError::Validation(format!(
            "difficulty correlation needs at least 3 cases, got {}",
            pairs.len()
        )));
    }
    let pred: Vec<Scanpath> = pairs.iter().map(|(p, _)| (*p).clone()).collect();
    let gt: Vec<Scanpath> = pairs.iter().map(|(_, g)| (*g).clone()).collect();
    let pred_totals: Vec<f64> = pred.iter().map(Scanpath::total_duration).collect();
    let gt_totals: Vec<f64> = gt.iter().map(Scanpath::total_duration).collect();
    let predicted = rank_difficulty(&pred)?;
    let ground_truth = rank_difficulty(&gt)?;
    Ok(RankReport {
        n_cases: pairs.len(),
        pearson: pearson(&pred_totals, &gt_totals)?,
        spearman: spearman(&pred_totals, &gt_totals)?,
        ground_truth_extremes: extremes(&ground_truth, top_k)?,
        predicted_extremes: extremes(&predicted, top_k)?,
        ground_truth,
        predicted,
    })
}

impl RankReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Columns `case_id,gt_total_ms,gt_rank,pred_total_ms,pred_rank` in
    /// ground-truth rank order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,gt_total_ms,gt_rank,pred_total_ms,pred_rank\n");
        for g in self.ground_truth.entries() {
            let p = self
                .predicted
                .entries()
                .iter()
                .find(|p| p.case_id == g.case_id)
                .expect("rankings cover the same cases");
            out.push_str(&format!("{},{},{},{},{}\n", g.case_id, g.total_duration_ms, g.rank, p.total_duration_ms, p.rank));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gazebench_core::Fixation;

    fn sp(id: &str, durations: &[f64]) -> Scanpath {
        let f = durations.iter().map(|&d| Fixation::new(0.5, 0.5, d).unwrap()).collect();
        Scanpath::new(id, 10, 10, f).unwrap()
    }

    #[test]
    fn identical_corpora_correlate_perfectly() {
        let cases: Vec<_> = [300.0, 100.0, 700.0, 250.0].iter().enumerate().map(|(i, &d)| sp(&format!("c{i}"), &[d, 50.0])).collect();
        let pairs: Vec<_> = cases.iter().map(|c| (c, c)).collect();
        let r = rank_report(&pairs, 2).unwrap();
        assert!((r.pearson.coefficient - 1.0).abs() < 1e-12);
        assert!((r.spearman.coefficient - 1.0).abs() < 1e-12);
        assert_eq!(r.ground_truth_extremes.hardest[0].case_id, "c2");
        assert_eq!(r.ground_truth_extremes.easiest[0].case_id, "c1");
    }

    #[test]
    fn reversed_order_gives_minus_one() {
        let gt: Vec<_> = (0..5).map(|i| sp(&format!("c{i}"), &[100.0 * (i + 1) as f64])).collect();
        let pred: Vec<_> = (0..5).map(|i| sp(&format!("c{i}"), &[1000.0 - 37.0 * i as f64 * i as f64])).collect();
        let pairs: Vec<_> = pred.iter().zip(&gt).collect();
        let r = rank_report(&pairs, 10).unwrap();
        assert!((r.spearman.coefficient + 1.0).abs() < 1e-12);
        assert_eq!(r.predicted_extremes.k, 5);
    }

    #[test]
    fn hand_corpus_matches_hand_values() {
        // Totals (pred, gt): (1,2) (2,1) (3,4) (4,3) (5,5).
        let p = [1.0, 2.0, 3.0, 4.0, 5.0];
        let g = [2.0, 1.0, 4.0, 3.0, 5.0];
        let pred: Vec<_> = p.iter().enumerate().map(|(i, &d)| sp(&format!("c{i}"), &[d])).collect();
        let gt: Vec<_> = g.iter().enumerate().map(|(i, &d)| sp(&format!("c{i}"), &[d])).collect();
        let pairs: Vec<_> = pred.iter().zip(&gt).collect();
        let r = rank_report(&pairs, 1).unwrap();
        // Sum of squared rank differences is 4, so rho = 1 - 6*4/(5*24) = 0.8;
        // with no ties Pearson on these values equals the same number.
        assert!((r.spearman.coefficient - 0.8).abs() < 1e-12);
        assert!((r.pearson.coefficient - 0.8).abs() < 1e-12);
        assert!(r.to_csv().starts_with("case_id,gt_total_ms,gt_rank,pred_total_ms,pred_rank\nc4,5,1,5,1\n"));
    }

    #[test]
    fn too_few_cases() {
        let a = sp("a", &[1.0]);
        assert!(rank_report(&[(&a, &a)], 1).is_err());
    }
}
