use crate::domain::{Question, RewardBreakdown, Rollout, Vocab};
use crate::env::{follows_plan, format_ok, task_success};

/// `(r_acc, r_terminal, r_penalty)`.
///
/// `r_penalty` is minus the share of the most frequent plan, counting the
/// final Termination when present.
pub fn planner_reward(rollout: &Rollout, correct: bool) -> (f64, f64, f64) {
    let r_acc = if correct { 1.0 } else { 0.0 };
    let r_terminal = if rollout.terminated_by_planner { 1.0 } else { -1.0 };
    let plans = rollout.plans();
    let mut counts = [0usize; crate::domain::Strategy::COUNT];
    for p in &plans {
        counts[p.id()] += 1;
    }
    let modal = counts.iter().copied().max().unwrap_or(0);
    let r_penalty = if plans.is_empty() { -1.0 } else { -(modal as f64) / plans.len() as f64 };
    (r_acc, r_terminal, r_penalty)
}

/// `(r_acc, r_format, r_follow)`; `r_follow` is 0 for an empty trace.
pub fn reasoner_reward(rollout: &Rollout, correct: bool, formatted: bool, vocab: &Vocab) -> (f64, f64, f64) {
    let r_acc = if correct { 1.0 } else { 0.0 };
    let r_format = if formatted { 1.0 } else { 0.0 };
    let n = rollout.steps.len();
    let r_follow = if n == 0 {
        0.0
    } else {
        let followed = rollout.steps.iter().filter(|s| follows_plan(s.strategy, &s.tokens, vocab)).count();
        followed as f64 / n as f64
    };
    (r_acc, r_format, r_follow)
}

pub fn score_rollout(question: &Question, rollout: &Rollout, vocab: &Vocab, l_max: usize) -> RewardBreakdown {
    let correct = task_success(question, rollout, vocab);
    let formatted = format_ok(rollout, vocab, l_max);
    let (r_acc, r_terminal, r_penalty) = planner_reward(rollout, correct);
    let (_, r_format, r_follow) = reasoner_reward(rollout, correct, formatted, vocab);
    RewardBreakdown::new(r_acc, r_format, r_follow, r_terminal, r_penalty)
}
