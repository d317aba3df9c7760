//! Synthetic step-wise tasks and their exact verifiers.
//!
//! * ChainArithmetic: `a1 op1 a2 … opd a(d+1)` over single digits, folded left
//!   to right with a mod-10 reduction after every operation.
//! * StrategyLock: `LOCK k1 … kd`; solved only when the planner injects exactly
//!   `k1 … kd` and then terminates, with the reasoner following every plan.

mod export;
mod task;

pub use export::{read_questions_jsonl, write_questions_jsonl, QuestionRecord};
pub use task::{
    fold_chain, follows_plan, format_ok, generate_questions, generate_questions_from, lock_accuracy,
    plan_sequence_matches, task_success, verify, TaskSpec,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("operation requires a StrategyLock question")]
    WrongTask,
    #[error("malformed question record at line {line}: {message}")]
    Parse { line: usize, message: String },
}
