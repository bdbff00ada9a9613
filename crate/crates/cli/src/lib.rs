//! Corpus ingestion, synthetic data and the `gazebench` command set.

pub mod commands;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod rank;
pub mod ratings;
pub mod synthetic;

pub use error::{CliError, Result};
