use std::io::BufRead;
use std::path::Path;

use super::AnalysisError;
use crate::marl::UpdateMetrics;

pub const CURVE_COLUMNS: [&str; 16] = [
    "update",
    "epoch",
    "stage",
    "lambda",
    "lr",
    "mean_planner_reward",
    "mean_reasoner_reward",
    "mean_r_acc",
    "mean_r_follow",
    "mean_r_penalty",
    "terminal_rate",
    "kl_planner",
    "kl_reasoner",
    "loss",
    "eval_accuracy",
    "mean_strategies_per_question",
];

/// One CSV row per metrics record. Blank lines are skipped; optional fields
/// absent from a record are left empty. Line numbers in errors are 1-based.
pub fn summarize_metrics<R: BufRead>(input: R) -> Result<String, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| AnalysisError::Io(e.to_string());
    w.write_record(CURVE_COLUMNS).map_err(io)?;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| AnalysisError::ParseError(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: UpdateMetrics =
            serde_json::from_str(&line).map_err(|e| AnalysisError::ParseError(i + 1, e.to_string()))?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            m.update.to_string(),
            m.epoch.to_string(),
            m.stage.to_string(),
            m.lambda.to_string(),
            m.lr.to_string(),
            m.mean_planner_reward.to_string(),
            m.mean_reasoner_reward.to_string(),
            m.mean_r_acc.to_string(),
            m.mean_r_follow.to_string(),
            m.mean_r_penalty.to_string(),
            m.terminal_rate.to_string(),
            m.kl_planner.to_string(),
            m.kl_reasoner.to_string(),
            m.loss.to_string(),
            opt(m.eval_accuracy),
            opt(m.mean_strategies_per_question),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| AnalysisError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AnalysisError::Io(e.to_string()))
}

pub fn summarize_metrics_file(path: &Path) -> Result<String, AnalysisError> {
    let f = std::fs::File::open(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    summarize_metrics(std::io::BufReader::new(f))
}
