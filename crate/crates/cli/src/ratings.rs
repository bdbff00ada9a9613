//! Human-rating sheets: CSV in, count table out.

use std::path::Path;

use serde::Deserialize;

use gazebench_core::analytics::{tabulate_human_eval, HumanEvalTable, Rating};

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
struct RatingRow {
    video_id: String,
    source: String,
    criterion: String,
    rating: i64,
}

/// Parses a sheet with header `video_id,source,criterion,rating`.
pub fn parse_ratings<R: std::io::Read>(reader: R) -> Result<Vec<Rating>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut ratings = Vec::new();
    for (i, row) in csv.deserialize::<RatingRow>().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let at = |m: String| CliError::Validation(format!("line {line}: {m}"));
        let row = row.map_err(|e| at(e.to_string()))?;
        ratings.push(Rating {
            video_id: row.video_id,
            source: row.source.parse().map_err(|e: gazebench_core::Error| at(e.to_string()))?,
            criterion: row.criterion.parse().map_err(|e: gazebench_core::Error| at(e.to_string()))?,
            rating: row.rating,
        });
    }
    Ok(ratings)
}

pub fn load_ratings(path: &Path) -> Result<Vec<Rating>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse_ratings(file).map_err(|e| e.context(path.display()))
}

pub fn tabulate(ratings: &[Rating]) -> Result<HumanEvalTable> {
    Ok(tabulate_human_eval(ratings)?)
}

/// Columns `criterion,rating,label,prediction,ground_truth`.
pub fn table_to_csv(table: &HumanEvalTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["criterion", "rating", "label", "prediction", "ground_truth"])
        .expect("in-memory write");
    for (criterion, rating, pred, gt) in table.rows() {
        w.write_record([
            criterion.name().to_string(),
            rating.to_string(),
            criterion.label(rating).to_string(),
            pred.to_string(),
            gt.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 output")
}
