//! The nine plan actions available to the planner.
//!
//! Ids are dense in `0..9`. Termination is id 0 and carries no marker; every
//! other strategy `k` is injected into the reasoner's context as marker token
//! `Mk`, which is also what the reasoner is expected to emit first.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Raw bytes of the bundled strategy table (ids, names, markers, keywords).
pub const STRATEGY_TABLE_JSON: &str = include_str!("../../data/strategies.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Termination,
    SelfReflection,
    Decomposition,
    DeliberativeThinking,
    Validation,
    Summarization,
    Prioritization,
    SubPlanning,
    Continuation,
}

impl Strategy {
    pub const COUNT: usize = 9;

    pub const ALL: [Strategy; 9] = [
        Strategy::Termination,
        Strategy::SelfReflection,
        Strategy::Decomposition,
        Strategy::DeliberativeThinking,
        Strategy::Validation,
        Strategy::Summarization,
        Strategy::Prioritization,
        Strategy::SubPlanning,
        Strategy::Continuation,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Strategy> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Termination => "Termination",
            Strategy::SelfReflection => "SelfReflection",
            Strategy::Decomposition => "Decomposition",
            Strategy::DeliberativeThinking => "DeliberativeThinking",
            Strategy::Validation => "Validation",
            Strategy::Summarization => "Summarization",
            Strategy::Prioritization => "Prioritization",
            Strategy::Continuation => "Continuation",
            Strategy::SubPlanning => "SubPlanning",
        }
    }

    /// Name of the vocabulary token that injects this strategy.
    pub fn marker_name(self) -> Option<&'static str> {
        const MARKERS: [&str; 8] = ["M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"];
        match self {
            Strategy::Termination => None,
            s => Some(MARKERS[s.id() - 1]),
        }
    }

    pub fn is_termination(self) -> bool {
        self == Strategy::Termination
    }

    /// Whether the strategy counts toward "strategies applied per question".
    pub fn is_counted(self) -> bool {
        !matches!(self, Strategy::Termination | Strategy::Continuation)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    /// Accepts the canonical name (case-insensitive, `-`/`_` ignored) or the id.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(id) = s.trim().parse::<usize>() {
            return Strategy::from_id(id).ok_or_else(|| UnknownStrategy(s.to_string()));
        }
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().to_lowercase() == norm)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub id: usize,
    pub name: String,
    pub marker: Option<String>,
    pub keywords: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyTable {
    pub version: u32,
    pub strategies: Vec<StrategyEntry>,
}

impl StrategyTable {
    /// The bundled table, parsed once.
    pub fn bundled() -> &'static StrategyTable {
        static TABLE: OnceLock<StrategyTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            serde_json::from_str(STRATEGY_TABLE_JSON).expect("bundled strategy table is valid JSON")
        })
    }

    pub fn entry(&self, strategy: Strategy) -> &StrategyEntry {
        &self.strategies[strategy.id()]
    }

    /// Hex SHA-256 of the bundled table bytes; stored in checkpoints.
    pub fn bundled_hash() -> String {
        hex_digest(STRATEGY_TABLE_JSON.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
