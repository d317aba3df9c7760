//! Run configuration. One JSON document; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::env::TaskSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Architecture hyperparameters of one policy network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyShape {
    pub embed_dim: usize,
    /// Number of trailing context tokens the network sees.
    pub context_window: usize,
    pub hidden_dims: Vec<usize>,
}

impl Default for PolicyShape {
    fn default() -> Self {
        PolicyShape { embed_dim: 16, context_window: 32, hidden_dims: vec![64] }
    }
}

/// Where plans come from during sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerSource {
    #[default]
    Learned,
    /// Uniform over all nine strategies; used for reasoner-only baselines.
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: TaskSpec,
    /// G, rollouts per question.
    pub group_size: usize,
    pub temp_train: f64,
    pub temp_eval_planner: f64,
    pub temp_eval_reasoner: f64,
    pub beta_kl: f64,
    pub clip_eps: f64,
    pub lambda_stage1: f64,
    pub lambda_stage2: f64,
    /// Updates before this count use `lambda_stage1`.
    pub stage_boundary: u64,
    pub epochs: u64,
    pub steps_per_epoch: u64,
    pub batch_questions: usize,
    pub grad_accum: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub n_max: usize,
    pub l_max: usize,
    pub max_prompt_len: usize,
    pub seed: u64,
    /// Evaluate on the held-out set every this many updates (0 disables).
    pub eval_every: u64,
    pub eval_questions: usize,
    /// Rayon worker count for rollout generation; 0 uses the global pool.
    pub threads: usize,
    pub planner_source: PlannerSource,
    pub planner: PolicyShape,
    pub reasoner: PolicyShape,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskSpec::default(),
            group_size: 16,
            temp_train: 0.9,
            temp_eval_planner: 0.0,
            temp_eval_reasoner: 0.3,
            beta_kl: 0.04,
            clip_eps: 0.2,
            lambda_stage1: 0.7,
            lambda_stage2: 0.3,
            stage_boundary: 100,
            epochs: 4,
            steps_per_epoch: 50,
            batch_questions: 16,
            grad_accum: 4,
            lr_max: 1e-2,
            lr_min: 1e-4,
            n_max: 8,
            l_max: 16,
            max_prompt_len: 32,
            seed: 0,
            eval_every: 0,
            eval_questions: 50,
            threads: 0,
            planner_source: PlannerSource::Learned,
            planner: PolicyShape::default(),
            reasoner: PolicyShape::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_updates(&self) -> u64 {
        self.epochs * self.steps_per_epoch
    }

    /// Objective weight on the planner term for the update with 0-based index `update`.
    pub fn lambda_at(&self, update: u64) -> (u8, f64) {
        if update < self.stage_boundary {
            (1, self.lambda_stage1)
        } else {
            (2, self.lambda_stage2)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        if self.group_size < 2 {
            return err("group_size must be at least 2");
        }
        let temps = [self.temp_train, self.temp_eval_planner, self.temp_eval_reasoner];
        if temps.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return err("temperatures must be finite and non-negative");
        }
        if self.temp_train == 0.0 {
            return err("temp_train must be positive");
        }
        for l in [self.lambda_stage1, self.lambda_stage2] {
            if !(0.0..=1.0).contains(&l) {
                return err("lambda must lie in [0, 1]");
            }
        }
        if self.clip_eps.is_nan() || self.clip_eps <= 0.0 {
            return err("clip_eps must be positive");
        }
        if !self.beta_kl.is_finite() || self.beta_kl < 0.0 {
            return err("beta_kl must be finite and non-negative");
        }
        if self.n_max < 1 {
            return err("n_max must be at least 1");
        }
        if self.l_max < 2 {
            return err("l_max must be at least 2");
        }
        if self.batch_questions < 1 || self.grad_accum < 1 {
            return err("batch_questions and grad_accum must be at least 1");
        }
        if !(self.lr_max.is_finite() && self.lr_min.is_finite()) || self.lr_min < 0.0 || self.lr_max < self.lr_min {
            return err("learning rates must satisfy 0 <= lr_min <= lr_max");
        }
        for shape in [&self.planner, &self.reasoner] {
            if shape.embed_dim < 1 || shape.context_window < 1 || shape.hidden_dims.iter().any(|&h| h < 1) {
                return err("policy dimensions must be at least 1");
            }
        }
        self.task.validate(self.n_max).map_err(|e| ConfigError(e.to_string()))?;
        if self.task.prompt_len() > self.max_prompt_len {
            return err("task prompt exceeds max_prompt_len");
        }
        Ok(())
    }
}
