//! Planner and reasoner policy networks with exact analytic gradients,
//! AdamW, and the cosine learning-rate schedule.

pub mod gradcheck;
pub mod network;
pub mod optim;
pub mod params;
pub mod sampling;
pub mod spec;

pub use gradcheck::{gradcheck, gradcheck_with, GradcheckReport};
pub use network::{context_window, forward_logits, log_softmax, softmax, GradBuffer, Policy};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, OptimizerState};
pub use params::{Grads, PolicyParams, Tensor, INIT_SCALE};
pub use sampling::{sample_categorical, sample_masked};
pub use spec::{PolicyRole, PolicySpec};

use crate::domain::TokenId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("empty context")]
    EmptyContext,
    #[error("token id {0} outside the vocabulary")]
    BadToken(TokenId),
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite parameter after update")]
    NonFiniteParameter,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("invalid policy spec: {0}")]
    InvalidSpec(String),
}
