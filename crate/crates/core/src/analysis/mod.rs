//! Strategy-usage counting and metrics post-processing.

mod counter;
mod metrics;

pub use counter::{count_strategies_rollout, count_strategies_text, counts_csv, KeywordTable, StrategyCounts};
pub use metrics::{summarize_metrics, summarize_metrics_file, CURVE_COLUMNS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("parse error at line {0}: {1}")]
    ParseError(usize, String),
    #[error("io error: {0}")]
    Io(String),
}
