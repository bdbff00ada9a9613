use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scanpath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub case_id: String,
    pub total_duration_ms: f64,
    /// 1 = longest total duration (hardest case).
    pub rank: usize,
}

/// Cases ordered by descending total fixation duration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifficultyRanking {
    entries: Vec<RankedCase>,
}

impl DifficultyRanking {
    pub fn entries(&self) -> &[RankedCase] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, case_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.case_id == case_id)
            .map(|e| e.rank)
    }

    /// The `k` hardest cases (rank 1 first) and the `k` easiest (rank N first).
    pub fn extremes(&self, k: usize) -> Result<(Vec<RankedCase>, Vec<RankedCase>)> {
        if k > self.entries.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds the {} ranked cases",
                self.entries.len()
            )));
        }
        let top = self.entries[..k].to_vec();
        let bottom = self.entries[self.entries.len() - k..]
            .iter()
            .rev()
            .cloned()
            .collect();
        Ok((top, bottom))
    }
}

pub fn rank_difficulty(cases: &[Scanpath]) -> Result<DifficultyRanking> {
    let totals: Vec<(String, f64)> = cases
        .iter()
        .map(|s| (s.case_id().to_string(), s.total_duration()))
        .collect();
    rank_by_duration(&totals)
}

/// Ranks `(case_id, total_ms)` pairs; equal durations fall back to
/// lexicographic case_id order.
pub fn rank_by_duration(totals: &[(String, f64)]) -> Result<DifficultyRanking> {
    if totals.is_empty() {
        return Err(Error::InvalidArgument("cannot rank an empty corpus".into()));
    }
    let mut sorted = totals.to_vec();
    sorted.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    let entries = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (case_id, total_duration_ms))| RankedCase {
            case_id,
            total_duration_ms,
            rank: i + 1,
        })
        .collect();
    Ok(DifficultyRanking { entries })
}
