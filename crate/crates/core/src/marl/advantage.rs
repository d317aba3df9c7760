use super::objective::CurrentLogprobs;
use super::reward::score_rollout;
use super::MarlError;
use crate::domain::{Question, RewardBreakdown, Rollout, Vocab};

/// Population-std threshold below which a group is treated as degenerate.
pub const DEGENERATE_STD: f64 = 1e-12;

/// `(R_j − mean) / std` with the population std; all zeros for a degenerate group.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, MarlError> {
    let g = rewards.len();
    if g < 2 {
        return Err(MarlError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    if std.is_nan() || std < DEGENERATE_STD {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Per-token KL estimator `r − ln r − 1` with `r = π_ref / π`.
pub fn kl_token(logprob_current: f64, logprob_reference: f64) -> f64 {
    let log_r = logprob_reference - logprob_current;
    log_r.exp() - log_r - 1.0
}

/// The G rollouts of one question with their rewards and advantages.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupBatch {
    pub question: Question,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<RewardBreakdown>,
    pub planner_advantages: Vec<f64>,
    pub reasoner_advantages: Vec<f64>,
}

impl GroupBatch {
    pub fn new(question: Question, rollouts: Vec<Rollout>, vocab: &Vocab, l_max: usize) -> Result<GroupBatch, MarlError> {
        let rewards: Vec<RewardBreakdown> = rollouts.iter().map(|r| score_rollout(&question, r, vocab, l_max)).collect();
        let planner_advantages = group_advantages(&rewards.iter().map(|r| r.planner_total).collect::<Vec<_>>())?;
        let reasoner_advantages = group_advantages(&rewards.iter().map(|r| r.reasoner_total).collect::<Vec<_>>())?;
        Ok(GroupBatch { question, rollouts, rewards, planner_advantages, reasoner_advantages })
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }
}

/// Advantages and importance ratios attached to one reasoning token.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TokenTerm {
    pub step: usize,
    pub planner_advantage: f64,
    /// Ratio of the plan that governs this token's step.
    pub planner_ratio: f64,
    pub reasoner_advantage: f64,
    pub reasoner_ratio: f64,
}

/// Broadcasts the rollout's advantages over its tokens, pairing each token
/// with its step's plan ratio and its own token ratio.
pub fn token_advantages(
    rollout: &Rollout,
    current: &CurrentLogprobs,
    planner_advantage: f64,
    reasoner_advantage: f64,
) -> Vec<TokenTerm> {
    let mut out = Vec::with_capacity(rollout.token_count());
    for (i, step) in rollout.steps.iter().enumerate() {
        let planner_ratio = (current.plans[i] - step.old_plan_logprob).exp();
        for (t, old) in step.old_token_logprobs.iter().enumerate() {
            out.push(TokenTerm {
                step: i,
                planner_advantage,
                planner_ratio,
                reasoner_advantage,
                reasoner_ratio: (current.tokens[i][t] - old).exp(),
            });
        }
    }
    out
}
