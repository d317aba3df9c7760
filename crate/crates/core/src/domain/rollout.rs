use serde::{Deserialize, Serialize};

use super::strategy::Strategy;
use super::vocab::{TokenId, Vocab};

/// One injected plan and the reasoning step decoded under it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub strategy: Strategy,
    /// Ends with SEP unless the step hit the token cap.
    pub tokens: Vec<TokenId>,
    /// Behavior-policy log-probability of each token, at the sampling temperature.
    pub old_token_logprobs: Vec<f64>,
    pub old_plan_logprob: f64,
}

/// One interleaved plan/step trace.
///
/// A rollout ends either because the planner chose Termination (the final plan,
/// which has no step) or because the step cap was reached. Truncated rollouts
/// carry exactly one plan per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub question_id: u64,
    pub steps: Vec<Step>,
    pub terminated_by_planner: bool,
    pub truncated: bool,
    /// Behavior log-probability of the final Termination plan.
    pub termination_logprob: Option<f64>,
    pub extracted_answer: Option<Vec<TokenId>>,
}

impl Rollout {
    /// Every plan selected, including a final Termination.
    pub fn plans(&self) -> Vec<Strategy> {
        let mut plans: Vec<Strategy> = self.steps.iter().map(|s| s.strategy).collect();
        if self.terminated_by_planner {
            plans.push(Strategy::Termination);
        }
        plans
    }

    pub fn token_count(&self) -> usize {
        self.steps.iter().map(|s| s.tokens.len()).sum()
    }

    /// Concatenated step tokens.
    pub fn trace_tokens(&self) -> Vec<TokenId> {
        self.steps.iter().flat_map(|s| s.tokens.iter().copied()).collect()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check(&self, n_max: usize) -> Result<(), String> {
        if self.terminated_by_planner == self.truncated {
            return Err("exactly one of terminated_by_planner / truncated must hold".into());
        }
        if self.steps.len() > n_max {
            return Err(format!("{} steps exceeds n_max {n_max}", self.steps.len()));
        }
        if self.terminated_by_planner != self.termination_logprob.is_some() {
            return Err("termination log-probability present iff terminated".into());
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.strategy.is_termination() {
                return Err(format!("step {i} carries the Termination plan"));
            }
            if s.tokens.len() != s.old_token_logprobs.len() {
                return Err(format!("step {i} has mismatched log-probabilities"));
            }
            if s.old_token_logprobs.iter().any(|&lp| lp > 0.0 || lp.is_nan()) {
                return Err(format!("step {i} has a log-probability above zero"));
            }
        }
        Ok(())
    }
}

/// Tokens strictly between the last ANS of the final step and its closing SEP.
pub fn extract_answer(rollout: &Rollout, vocab: &Vocab) -> Option<Vec<TokenId>> {
    let last = rollout.steps.last()?;
    let ans = last.tokens.iter().rposition(|&t| t == vocab.ans)?;
    let end = match last.tokens.last() {
        Some(&t) if t == vocab.sep => last.tokens.len() - 1,
        _ => last.tokens.len(),
    };
    Some(last.tokens[ans + 1..end.max(ans + 1)].to_vec())
}
