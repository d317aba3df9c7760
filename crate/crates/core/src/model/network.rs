//! Forward and backward passes.
//!
//! Two evaluation routes share one parameter layout. [`forward_logits`] is the
//! direct dense computation. [`Policy`] caches, per window position and token,
//! the first layer's contribution `W0[p]^T emb[token]`, which turns the widest
//! matrix product into `context_window` vector additions. Training and sampling
//! use `Policy`; the dense route is the reference the gradient check differences.

use super::{Grads, ModelError, PolicyParams, PolicySpec};
use crate::domain::TokenId;

/// Last `window` tokens of `context`, left-padded with `pad`.
pub fn context_window(context: &[TokenId], window: usize, pad: TokenId) -> Vec<TokenId> {
    let take = context.len().min(window);
    let mut out = vec![pad; window - take];
    out.extend_from_slice(&context[context.len() - take..]);
    out
}

fn check_tokens(spec: &PolicySpec, context: &[TokenId]) -> Result<(), ModelError> {
    if context.is_empty() {
        return Err(ModelError::EmptyContext);
    }
    match context.iter().find(|&&t| t >= spec.vocab_size) {
        Some(&t) => Err(ModelError::BadToken(t)),
        None => Ok(()),
    }
}

/// Dense reference forward pass. `pad` fills the window when the context is short.
pub fn forward_logits(params: &PolicyParams, context: &[TokenId], pad: TokenId) -> Result<Vec<f64>, ModelError> {
    let spec = &params.spec;
    check_tokens(spec, context)?;
    let window = context_window(context, spec.context_window, pad);
    let e = spec.embed_dim;
    let emb = params.embedding();
    let mut act: Vec<f64> = window.iter().flat_map(|&t| emb[t * e..(t + 1) * e].iter().copied()).collect();
    for (i, &width) in spec.hidden_dims.iter().enumerate() {
        act = dense(&act, params.layer_weight(i), params.layer_bias(i), width);
        act.iter_mut().for_each(|x| *x = x.tanh());
    }
    Ok(dense(&act, params.head_weight(), params.head_bias(), spec.output_arity))
}

fn dense(input: &[f64], weight: &[f64], bias: &[f64], width: usize) -> Vec<f64> {
    let mut out = bias.to_vec();
    for (j, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &weight[j * width..(j + 1) * width];
        for (o, w) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    out
}

pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - max) / temperature).collect();
    let lse = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    scaled.iter().map(|s| s - lse).collect()
}

pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    log_softmax(logits, temperature).into_iter().map(f64::exp).collect()
}

struct Trace {
    window: Vec<TokenId>,
    /// Post-tanh activations per hidden layer.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

/// Parameters plus the cached first-layer position/token table.
#[derive(Clone, Debug)]
pub struct Policy {
    params: PolicyParams,
    table: Vec<f64>,
    pad: TokenId,
}

impl Policy {
    pub fn new(params: PolicyParams, pad: TokenId) -> Policy {
        let table = build_table(&params);
        Policy { params, table, pad }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.params.spec
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn pad(&self) -> TokenId {
        self.pad
    }

    /// Mutates the parameters and rebuilds the cached table.
    pub fn update<T>(&mut self, f: impl FnOnce(&mut PolicyParams) -> T) -> T {
        let out = f(&mut self.params);
        self.table = build_table(&self.params);
        out
    }

    pub fn logits(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self.trace(context)?.logits)
    }

    /// The validated window the network actually reads; contexts with equal
    /// windows have equal outputs.
    pub fn window(&self, context: &[TokenId]) -> Result<Vec<TokenId>, ModelError> {
        check_tokens(&self.params.spec, context)?;
        Ok(context_window(context, self.params.spec.context_window, self.pad))
    }

    pub fn log_probs(&self, context: &[TokenId], temperature: f64) -> Result<Vec<f64>, ModelError> {
        let logits = self.logits(context)?;
        check_target(&logits, 0)?;
        Ok(log_softmax(&logits, temperature))
    }

    /// `log π(target | context)` at `temperature`.
    pub fn log_prob(&self, context: &[TokenId], target: usize, temperature: f64) -> Result<f64, ModelError> {
        let logits = self.logits(context)?;
        check_target(&logits, target)?;
        Ok(log_softmax(&logits, temperature)[target])
    }

    fn trace(&self, context: &[TokenId]) -> Result<Trace, ModelError> {
        let spec = &self.params.spec;
        check_tokens(spec, context)?;
        let window = context_window(context, spec.context_window, self.pad);
        let h0 = spec.hidden_dims[0];
        let v = spec.vocab_size;
        let mut pre = self.params.layer_bias(0).to_vec();
        for (p, &tok) in window.iter().enumerate() {
            let row = &self.table[(p * v + tok) * h0..(p * v + tok + 1) * h0];
            for (a, b) in pre.iter_mut().zip(row) {
                *a += b;
            }
        }
        pre.iter_mut().for_each(|x| *x = x.tanh());
        let mut acts = vec![pre];
        for i in 1..spec.hidden_dims.len() {
            let mut next = dense(&acts[i - 1], self.params.layer_weight(i), self.params.layer_bias(i), spec.hidden_dims[i]);
            next.iter_mut().for_each(|x| *x = x.tanh());
            acts.push(next);
        }
        let logits = dense(acts.last().unwrap(), self.params.head_weight(), self.params.head_bias(), spec.output_arity);
        Ok(Trace { window, acts, logits })
    }

    /// Adds `upstream * ∂ log π(target | context) / ∂θ` (at `temperature`) into `buf`
    /// and returns the log-probability.
    pub fn backward_accumulate(
        &self,
        context: &[TokenId],
        target: usize,
        temperature: f64,
        upstream: f64,
        buf: &mut GradBuffer,
    ) -> Result<f64, ModelError> {
        self.backward_with(context, target, temperature, buf, |_| upstream).map(|(lp, _)| lp)
    }

    /// Like [`Policy::backward_accumulate`], but the upstream weight is computed
    /// from the current log-probability. Returns `(log_prob, upstream)`.
    pub fn backward_with(
        &self,
        context: &[TokenId],
        target: usize,
        temperature: f64,
        buf: &mut GradBuffer,
        upstream_of: impl FnOnce(f64) -> f64,
    ) -> Result<(f64, f64), ModelError> {
        if !buf.matches(&self.params) {
            return Err(ModelError::ShapeMismatch("gradient buffer does not match policy".into()));
        }
        let tr = self.trace(context)?;
        check_target(&tr.logits, target)?;
        let logp = log_softmax(&tr.logits, temperature);
        let upstream = upstream_of(logp[target]);
        if upstream == 0.0 {
            return Ok((logp[target], 0.0));
        }
        if !upstream.is_finite() {
            return Err(ModelError::NonFiniteGradient);
        }
        // d log p / d z = (onehot - softmax(z / t)) / t
        let mut dz: Vec<f64> = logp.iter().map(|lp| -lp.exp() * upstream / temperature).collect();
        dz[target] += upstream / temperature;
        self.backprop(&tr, &dz, buf);
        Ok((logp[target], upstream))
    }

    /// One backward pass for several actions sharing `context`. `dlogp_of`
    /// receives the log-probabilities of every action and returns the upstream
    /// weight `∂J/∂ log π(a)` for each. Returns the log-probabilities.
    pub fn backward_dlogp(
        &self,
        context: &[TokenId],
        temperature: f64,
        buf: &mut GradBuffer,
        dlogp_of: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> Result<Vec<f64>, ModelError> {
        if !buf.matches(&self.params) {
            return Err(ModelError::ShapeMismatch("gradient buffer does not match policy".into()));
        }
        let tr = self.trace(context)?;
        check_target(&tr.logits, 0)?;
        let logp = log_softmax(&tr.logits, temperature);
        let up = dlogp_of(&logp);
        if up.len() != logp.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} upstream weights for {} actions",
                up.len(),
                logp.len()
            )));
        }
        if up.iter().all(|&u| u == 0.0) {
            return Ok(logp);
        }
        if up.iter().any(|u| !u.is_finite()) {
            return Err(ModelError::NonFiniteGradient);
        }
        // d/dz of sum_a u_a log p_a = (u - p * sum(u)) / t
        let total: f64 = up.iter().sum();
        let dz: Vec<f64> = up.iter().zip(&logp).map(|(u, lp)| (u - lp.exp() * total) / temperature).collect();
        self.backprop(&tr, &dz, buf);
        Ok(logp)
    }

    fn backprop(&self, tr: &Trace, dz: &[f64], buf: &mut GradBuffer) {
        let spec = &self.params.spec;
        let n_hidden = spec.hidden_dims.len();
        let n_tensors = self.params.tensors.len();

        let out = spec.output_arity;
        let last = &tr.acts[n_hidden - 1];
        {
            let gw = &mut buf.grads.data[n_tensors - 2];
            for (j, &a) in last.iter().enumerate() {
                for (g, d) in gw[j * out..(j + 1) * out].iter_mut().zip(dz) {
                    *g += a * d;
                }
            }
            for (g, d) in buf.grads.data[n_tensors - 1].iter_mut().zip(dz) {
                *g += d;
            }
        }
        let mut dact = matvec_t(self.params.head_weight(), dz, last.len(), out);

        for i in (0..n_hidden).rev() {
            let width = spec.hidden_dims[i];
            let dpre: Vec<f64> = dact.iter().zip(&tr.acts[i]).map(|(d, a)| d * (1.0 - a * a)).collect();
            for (g, d) in buf.grads.data[2 + 2 * i].iter_mut().zip(&dpre) {
                *g += d;
            }
            if i == 0 {
                let v = spec.vocab_size;
                for (p, &tok) in tr.window.iter().enumerate() {
                    let row = p * v + tok;
                    buf.touched[row] = true;
                    for (g, d) in buf.table[row * width..(row + 1) * width].iter_mut().zip(&dpre) {
                        *g += d;
                    }
                }
            } else {
                let prev = &tr.acts[i - 1];
                let gw = &mut buf.grads.data[1 + 2 * i];
                for (j, &a) in prev.iter().enumerate() {
                    for (g, d) in gw[j * width..(j + 1) * width].iter_mut().zip(&dpre) {
                        *g += a * d;
                    }
                }
                dact = matvec_t(self.params.layer_weight(i), &dpre, prev.len(), width);
            }
        }
    }
}

fn check_target(logits: &[f64], target: usize) -> Result<(), ModelError> {
    if target >= logits.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "target {target} outside output arity {}",
            logits.len()
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(ModelError::NonFiniteLogits);
    }
    Ok(())
}

/// `W d` for a row-major `rows x cols` matrix `W`.
fn matvec_t(w: &[f64], d: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|j| w[j * cols..(j + 1) * cols].iter().zip(d).map(|(a, b)| a * b).sum())
        .collect()
}

fn build_table(params: &PolicyParams) -> Vec<f64> {
    let spec = &params.spec;
    let (k, v, e, h) = (spec.context_window, spec.vocab_size, spec.embed_dim, spec.hidden_dims[0]);
    let emb = params.embedding();
    let w0 = params.layer_weight(0);
    let mut table = vec![0.0; k * v * h];
    for p in 0..k {
        for tok in 0..v {
            let out = &mut table[(p * v + tok) * h..(p * v + tok + 1) * h];
            for j in 0..e {
                let x = emb[tok * e + j];
                let row = &w0[(p * e + j) * h..(p * e + j + 1) * h];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += x * w;
                }
            }
        }
    }
    table
}

/// Accumulates log-probability gradients. The first layer's contribution is
/// held per (position, token) row and folded into the embedding and first
/// weight matrix by [`GradBuffer::finish`].
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Grads,
    table: Vec<f64>,
    touched: Vec<bool>,
    shape: Vec<usize>,
}

impl GradBuffer {
    pub fn new(params: &PolicyParams) -> GradBuffer {
        let spec = &params.spec;
        let rows = spec.context_window * spec.vocab_size;
        GradBuffer {
            grads: Grads::zeros_like(params),
            table: vec![0.0; rows * spec.hidden_dims[0]],
            touched: vec![false; rows],
            shape: params.tensors.iter().map(|t| t.data.len()).collect(),
        }
    }

    fn matches(&self, params: &PolicyParams) -> bool {
        self.shape.len() == params.tensors.len()
            && self.shape.iter().zip(&params.tensors).all(|(n, t)| *n == t.data.len())
            && self.table.len() == params.spec.context_window * params.spec.vocab_size * params.spec.hidden_dims[0]
    }

    pub fn is_empty(&self) -> bool {
        !self.touched.iter().any(|&t| t) && self.grads.is_zero()
    }

    /// Dense gradients in the parameter layout.
    pub fn finish(&self, params: &PolicyParams) -> Result<Grads, ModelError> {
        if !self.matches(params) {
            return Err(ModelError::ShapeMismatch("gradient buffer does not match policy".into()));
        }
        let spec = &params.spec;
        let (v, e, h) = (spec.vocab_size, spec.embed_dim, spec.hidden_dims[0]);
        let emb = params.embedding();
        let w0 = params.layer_weight(0);
        let mut out = self.grads.clone();
        let (emb_grad, rest) = out.data.split_at_mut(1);
        let (emb_grad, w0_grad) = (&mut emb_grad[0], &mut rest[0]);
        for (row, _) in self.touched.iter().enumerate().filter(|(_, &t)| t) {
            let (p, tok) = (row / v, row % v);
            let dt = &self.table[row * h..(row + 1) * h];
            for j in 0..e {
                let x = emb[tok * e + j];
                let wrow = &w0[(p * e + j) * h..(p * e + j + 1) * h];
                let grow = &mut w0_grad[(p * e + j) * h..(p * e + j + 1) * h];
                let mut acc = 0.0;
                for ((g, w), d) in grow.iter_mut().zip(wrow).zip(dt) {
                    *g += x * d;
                    acc += w * d;
                }
                emb_grad[tok * e + j] += acc;
            }
        }
        Ok(out)
    }
}
