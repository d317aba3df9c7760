use serde::{Deserialize, Serialize};

/// Rule-based reward components for one rollout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_format: f64,
    pub r_follow: f64,
    pub r_terminal: f64,
    pub r_penalty: f64,
    /// `r_acc + r_terminal + r_penalty`
    pub planner_total: f64,
    /// `r_acc + r_format + r_follow`
    pub reasoner_total: f64,
}

impl RewardBreakdown {
    pub fn new(r_acc: f64, r_format: f64, r_follow: f64, r_terminal: f64, r_penalty: f64) -> Self {
        RewardBreakdown {
            r_acc,
            r_format,
            r_follow,
            r_terminal,
            r_penalty,
            planner_total: r_acc + r_terminal + r_penalty,
            reasoner_total: r_acc + r_format + r_follow,
        }
    }

    pub fn totals_consistent(&self) -> bool {
        (self.planner_total - (self.r_acc + self.r_terminal + self.r_penalty)).abs() <= 1e-12
            && (self.reasoner_total - (self.r_acc + self.r_format + self.r_follow)).abs() <= 1e-12
    }
}
