use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::Serialize;

use crate::domain::{Rollout, Strategy, StrategyTable};

/// Per-strategy step counts, indexed by strategy id. Termination and
/// Continuation are never counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StrategyCounts(pub [u32; Strategy::COUNT]);

impl StrategyCounts {
    pub fn get(&self, s: Strategy) -> u32 {
        self.0[s.id()]
    }

    /// `(strategy, count)` for the seven counted strategies, in id order.
    pub fn counted(&self) -> Vec<(Strategy, u32)> {
        Strategy::ALL.iter().filter(|s| s.is_counted()).map(|&s| (s, self.get(s))).collect()
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Keyword lists as lowercase word sequences; single words and phrases alike.
#[derive(Clone, Debug)]
pub struct KeywordTable {
    lists: Vec<(Strategy, Vec<Vec<String>>)>,
}

impl KeywordTable {
    pub fn from_table(table: &StrategyTable) -> KeywordTable {
        let lists = Strategy::ALL
            .iter()
            .filter(|s| s.is_counted())
            .map(|&s| (s, table.entry(s).keywords.iter().map(|k| words(k)).collect()))
            .collect();
        KeywordTable { lists }
    }

    pub fn bundled() -> &'static KeywordTable {
        static TABLE: OnceLock<KeywordTable> = OnceLock::new();
        TABLE.get_or_init(|| KeywordTable::from_table(StrategyTable::bundled()))
    }

    /// Splits on blank lines and adds one per strategy for every step that
    /// contains any of its keywords as a whole word or contiguous phrase.
    pub fn count(&self, text: &str) -> StrategyCounts {
        let mut counts = StrategyCounts::default();
        for step in text.split("\n\n") {
            let ws = words(step);
            for (s, keywords) in &self.lists {
                if keywords.iter().any(|k| contains_run(&ws, k)) {
                    counts.0[s.id()] += 1;
                }
            }
        }
        counts
    }
}

/// Lowercase runs of alphanumerics and hyphens.
fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub fn count_strategies_text(text: &str) -> StrategyCounts {
    KeywordTable::bundled().count(text)
}

/// Injected plans excluding Continuation and Termination.
pub fn count_strategies_rollout(rollout: &Rollout) -> usize {
    rollout.steps.iter().filter(|s| s.strategy.is_counted()).count()
}

/// `index,<seven strategy names>` header followed by one row per text.
pub fn counts_csv(counts: &[StrategyCounts]) -> String {
    let mut out = String::from("index");
    for s in Strategy::ALL.iter().filter(|s| s.is_counted()) {
        out.push(',');
        out.push_str(s.name());
    }
    out.push('\n');
    for (i, c) in counts.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for (_, n) in c.counted() {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
    }
    out
}
