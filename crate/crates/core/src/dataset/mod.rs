//! Annotation data model and the operations that turn raw per-annotator labels
//! into training data: parsing, consolidation, subject-independent splitting
//! and summary statistics.

mod consolidate;
mod csv_io;
mod jsonl;
pub mod layout;
mod split;
mod stats;
mod types;

pub use consolidate::{consolidate, DEFAULT_REQUIRED_ANNOTATORS};
pub use csv_io::{read_consolidated_csv, write_consolidated_csv, CONSOLIDATED_HEADER};
pub use jsonl::{parse_annotations, serialize_annotations, serialize_record};
pub use split::{split_subject_independent, SplitFractions};
pub use stats::{dataset_stats, DatasetStats, Histogram};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("infeasible split: {0}")]
    Infeasible(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
