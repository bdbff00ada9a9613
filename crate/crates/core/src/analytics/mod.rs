//! Corpus-level statistics.

mod bootstrap;
mod correlation;
mod difficulty;
mod human_eval;

pub use bootstrap::{bootstrap_ci, BootstrapConfig, ConfidenceInterval};
pub use correlation::{average_ranks, pearson, spearman, spearman_permutation_p, Correlation};
pub use difficulty::{rank_by_duration, rank_difficulty, DifficultyRanking, RankedCase};
pub use human_eval::{tabulate_human_eval, Criterion, HumanEvalTable, Rating, RatingSource};

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
