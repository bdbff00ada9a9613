//! Tabulation of blinded expert ratings of predicted and recorded scanpaths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// 0 = machine-generated, 1 = human-like.
    HumanLikeness,
    /// Coverage of important regions, 1 (0-20%) to 5 (81-100%).
    Comprehensiveness,
    /// Coverage of redundant regions, 1 (minimal) to 5 (high).
    Redundancy,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [
        Criterion::HumanLikeness,
        Criterion::Comprehensiveness,
        Criterion::Redundancy,
    ];

    pub fn scale(self) -> std::ops::RangeInclusive<i64> {
        match self {
            Criterion::HumanLikeness => 0..=1,
            Criterion::Comprehensiveness | Criterion::Redundancy => 1..=5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::HumanLikeness => "human_likeness",
            Criterion::Comprehensiveness => "comprehensiveness",
            Criterion::Redundancy => "redundancy",
        }
    }

    pub fn label(self, rating: i64) -> &'static str {
        match (self, rating) {
            (Criterion::HumanLikeness, 0) => "machine-generated",
            (Criterion::HumanLikeness, 1) => "human-like",
            (Criterion::Comprehensiveness, 1) => "very little coverage (0-20%)",
            (Criterion::Comprehensiveness, 2) => "some regions covered (21-40%)",
            (Criterion::Comprehensiveness, 3) => "fair amount of coverage (41-60%)",
            (Criterion::Comprehensiveness, 4) => "most regions covered (61-80%)",
            (Criterion::Comprehensiveness, 5) => "all regions covered (81-100%)",
            (Criterion::Redundancy, 1) => "minimal redundancy",
            (Criterion::Redundancy, 2) => "some minor redundancy",
            (Criterion::Redundancy, 3) => "moderate redundancy",
            (Criterion::Redundancy, 4) => "significant redundancy",
            (Criterion::Redundancy, 5) => "high redundancy and inefficiency",
            _ => "",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "human_likeness" | "human_like" | "identification" => Ok(Criterion::HumanLikeness),
            "comprehensiveness" | "comprehensive" => Ok(Criterion::Comprehensiveness),
            "redundancy" => Ok(Criterion::Redundancy),
            other => Err(Error::InvalidArgument(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingSource {
    Prediction,
    GroundTruth,
}

impl FromStr for RatingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "prediction" | "predicted" => Ok(RatingSource::Prediction),
            "ground_truth" | "groundtruth" | "human" => Ok(RatingSource::GroundTruth),
            other => Err(Error::InvalidArgument(format!("unknown rating source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub video_id: String,
    pub source: RatingSource,
    pub criterion: Criterion,
    pub rating: i64,
}

/// Counts per `(criterion, rating, source)` over the full rating scales.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HumanEvalTable {
    counts: BTreeMap<(Criterion, i64), [u64; 2]>,
    rated: BTreeMap<(Criterion, RatingSource), u64>,
}

impl HumanEvalTable {
    fn empty() -> Self {
        let counts = Criterion::ALL
            .iter()
            .flat_map(|&c| c.scale().map(move |r| ((c, r), [0, 0])))
            .collect();
        Self {
            counts,
            rated: BTreeMap::new(),
        }
    }

    pub fn count(&self, criterion: Criterion, rating: i64, source: RatingSource) -> u64 {
        self.counts
            .get(&(criterion, rating))
            .map_or(0, |c| c[source as usize])
    }

    /// Number of distinct videos rated on `criterion` from `source`.
    pub fn rated_videos(&self, criterion: Criterion, source: RatingSource) -> u64 {
        self.rated.get(&(criterion, source)).copied().unwrap_or(0)
    }

    /// Rows of `(criterion, rating, prediction count, ground-truth count)`.
    pub fn rows(&self) -> impl Iterator<Item = (Criterion, i64, u64, u64)> + '_ {
        self.counts
            .iter()
            .map(|(&(c, r), counts)| (c, r, counts[0], counts[1]))
    }
}

pub fn tabulate_human_eval(ratings: &[Rating]) -> Result<HumanEvalTable> {
    let mut table = HumanEvalTable::empty();
    let mut seen = BTreeSet::new();
    for r in ratings {
        if !r.criterion.scale().contains(&r.rating) {
            return Err(Error::RatingOutOfScale {
                criterion: r.criterion.name().to_string(),
                rating: r.rating,
            });
        }
        if !seen.insert((r.video_id.as_str(), r.source, r.criterion)) {
            return Err(Error::InvalidArgument(format!(
                "video '{}' rated twice on {}",
                r.video_id, r.criterion
            )));
        }
        table.counts.get_mut(&(r.criterion, r.rating)).expect("scale cell")[r.source as usize] += 1;
        *table.rated.entry((r.criterion, r.source)).or_default() += 1;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(video: &str, source: RatingSource, criterion: Criterion, rating: i64) -> Rating {
        Rating {
            video_id: video.into(),
            source,
            criterion,
            rating,
        }
    }

    #[test]
    fn empty_ratings_give_zero_table() {
        let t = tabulate_human_eval(&[]).unwrap();
        assert!(t.rows().all(|(_, _, p, g)| p == 0 && g == 0));
        assert_eq!(t.rows().count(), 2 + 5 + 5);
    }

    #[test]
    fn counts_cells() {
        let ratings = vec![
            rating("v1", RatingSource::Prediction, Criterion::Redundancy, 1),
            rating("v2", RatingSource::Prediction, Criterion::Redundancy, 1),
            rating("v3", RatingSource::GroundTruth, Criterion::Redundancy, 2),
            rating("v3", RatingSource::GroundTruth, Criterion::HumanLikeness, 1),
        ];
        let t = tabulate_human_eval(&ratings).unwrap();
        assert_eq!(t.count(Criterion::Redundancy, 1, RatingSource::Prediction), 2);
        assert_eq!(t.count(Criterion::Redundancy, 2, RatingSource::GroundTruth), 1);
        assert_eq!(t.count(Criterion::HumanLikeness, 1, RatingSource::GroundTruth), 1);
        assert_eq!(t.rated_videos(Criterion::Redundancy, RatingSource::Prediction), 2);
    }

    #[test]
    fn out_of_scale_names_criterion() {
        let err = tabulate_human_eval(&[rating("v", RatingSource::Prediction, Criterion::HumanLikeness, 2)])
            .unwrap_err();
        assert!(err.to_string().contains("human_likeness"));
        let err = tabulate_human_eval(&[rating("v", RatingSource::Prediction, Criterion::Comprehensiveness, 0)])
            .unwrap_err();
        assert!(err.to_string().contains("comprehensiveness"));
    }

    #[test]
    fn duplicate_rating_rejected() {
        let r = rating("v", RatingSource::Prediction, Criterion::Redundancy, 1);
        assert!(tabulate_human_eval(&[r.clone(), r]).is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("Human-Like".parse::<Criterion>().unwrap(), Criterion::HumanLikeness);
        assert_eq!("ground truth".parse::<RatingSource>().unwrap(), RatingSource::GroundTruth);
        assert!("novelty".parse::<Criterion>().is_err());
    }
}
