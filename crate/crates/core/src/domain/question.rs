use std::fmt;

use serde::{Deserialize, Serialize};

use super::strategy::Strategy;
use super::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    ChainArithmetic,
    StrategyLock,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::ChainArithmetic => "ChainArithmetic",
            TaskKind::StrategyLock => "StrategyLock",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub task: TaskKind,
    /// Starts with BOS.
    pub prompt_tokens: Vec<TokenId>,
    pub ground_truth: Vec<TokenId>,
    /// Required plan sequence; StrategyLock only.
    pub lock_sequence: Option<Vec<Strategy>>,
}
