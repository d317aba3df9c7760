//! Vocabulary, strategies, questions, rollouts, rewards and run configuration.

pub mod config;
pub mod question;
pub mod reward;
pub mod rollout;
pub mod strategy;
pub mod vocab;

pub use config::{ConfigError, PlannerSource, PolicyShape, RunConfig};
pub use question::{Question, TaskKind};
pub use reward::RewardBreakdown;
pub use rollout::{extract_answer, Rollout, Step};
pub use strategy::{Strategy, StrategyEntry, StrategyTable};
pub use vocab::{Op, TokenId, Vocab, VocabError};
