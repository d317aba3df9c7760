//! Two-agent training: interactive sampling, rule rewards, group-relative
//! advantages, the joint clipped objective and the staged training loop.

mod advantage;
mod eval;
mod objective;
mod reward;
mod rollout;
mod train;

pub use advantage::{group_advantages, kl_token, token_advantages, GroupBatch, TokenTerm};
pub use eval::{continue_train, eval_questions, evaluate, plugin_eval, ContinueReport, EvalReport, EvalSettings};
pub use objective::{current_logprobs, joint_loss_and_grads, CurrentLogprobs, JointOutput, ObjectiveWeights};
pub use reward::{planner_reward, reasoner_reward, score_rollout};
pub use rollout::{interactive_sample, sample_groups, sample_rollout, SampleSettings};
pub use train::{init_policies, train, MetricsLog, TrainObserver, TrainOutcome, UpdateMetrics};

use crate::domain::ConfigError;
use crate::env::EnvError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarlError {
    #[error("group of {0} rollouts; at least 2 are required")]
    GroupTooSmall(usize),
    #[error("stale rollout: {0}")]
    StaleRollout(String),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("non-finite loss at update {0}")]
    NonFiniteLoss(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("observer failed: {0}")]
    Observer(String),
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG seed for the stream identified by `(seed, a, b)`.
pub fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(seed) ^ a) ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}
