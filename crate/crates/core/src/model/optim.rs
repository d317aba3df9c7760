//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::{Grads, ModelError, PolicyParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &PolicyParams, config: AdamWConfig) -> OptimizerState {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        OptimizerState { config, m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One AdamW update: `θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + eps)`, with bias-corrected moments.
pub fn adamw_step(
    params: &mut PolicyParams,
    grads: &Grads,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), ModelError> {
    let shapes_match = |a: &[Vec<f64>]| {
        a.len() == params.tensors.len() && a.iter().zip(&params.tensors).all(|(x, t)| x.len() == t.data.len())
    };
    if !shapes_match(&grads.data) || !shapes_match(&state.m) || !shapes_match(&state.v) {
        return Err(ModelError::ShapeMismatch("gradient or optimizer state does not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(ModelError::NonFiniteGradient);
    }
    let AdamWConfig { beta1, beta2, eps, weight_decay } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (i, tensor) in params.tensors.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads.data[i]);
        for j in 0..tensor.data.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let theta = tensor.data[j];
            tensor.data[j] = theta - lr * weight_decay * theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    if !params.is_finite() {
        return Err(ModelError::NonFiniteParameter);
    }
    Ok(())
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·step/total))`.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> Result<f64, ModelError> {
    if step > total_steps {
        return Err(ModelError::StepOutOfRange { step, total: total_steps });
    }
    if total_steps == 0 {
        return Ok(lr_max);
    }
    let frac = step as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos()))
}
