//! Metrics, the benchmark runner, and data loading for the command line.

mod bench;
mod data;
mod metrics;

use std::path::PathBuf;

use thiserror::Error;

use crate::search::SearchError;

pub use bench::{
    load_dataset, run_benchmark, BenchConfig, DatasetEntry, MetricReport, ReportHeader, SessionClients, SharedClient,
    REPORT_NOTES,
};
pub use data::{load_pairs, parse_pairs, question_for, Pair};
pub use metrics::{aggregate, compute_metrics, Aggregates, MetricRow, Metrics};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no question files in {0}")]
    EmptyDataset(PathBuf),
    #[error("question id {0} appears more than once")]
    DuplicateQuestion(String),
    #[error("target does not parse: {0}")]
    TargetParseError(String),
    #[error("existing report does not match this run: {0}")]
    ReportMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
