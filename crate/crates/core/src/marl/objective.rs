use std::collections::HashMap;

use super::advantage::{kl_token, GroupBatch};
use super::MarlError;
use crate::domain::{Question, Rollout, Strategy, TokenId, Vocab};
use crate::model::{GradBuffer, Grads, Policy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    /// Weight on the planner term; the reasoner term gets `1 − lambda`.
    pub lambda: f64,
    pub beta: f64,
    pub clip_eps: f64,
    /// Temperature the behavior log-probabilities were recorded at.
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointOutput {
    pub loss: f64,
    pub planner_grads: Grads,
    pub reasoner_grads: Grads,
    /// Mean over rollouts of the slot-averaged planner KL.
    pub kl_planner: f64,
    /// Mean over rollouts with at least one token of the token-averaged reasoner KL.
    pub kl_reasoner: f64,
}

/// Current-policy log-probabilities of a rollout's recorded actions.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentLogprobs {
    /// One per plan, the final Termination last when present.
    pub plans: Vec<f64>,
    pub tokens: Vec<Vec<f64>>,
}

struct PlanSlot {
    strategy: Strategy,
    old: f64,
    /// Number of loss slots this plan occupies: its step's token count, or 1
    /// for the final Termination, which governs no tokens.
    slots: usize,
}

/// Replays a rollout, calling `on_plan` with each planner context and
/// `on_token(context, step, index, token, old_logprob)` for every reasoner token.
fn replay(
    question: &Question,
    rollout: &Rollout,
    vocab: &Vocab,
    mut on_plan: impl FnMut(&[TokenId], PlanSlot) -> Result<(), MarlError>,
    mut on_token: impl FnMut(&[TokenId], usize, usize, TokenId, f64) -> Result<(), MarlError>,
) -> Result<(), MarlError> {
    let mut ctx = question.prompt_tokens.clone();
    for (i, step) in rollout.steps.iter().enumerate() {
        on_plan(&ctx, PlanSlot { strategy: step.strategy, old: step.old_plan_logprob, slots: step.tokens.len() })?;
        let base = ctx.len();
        if let Some(m) = vocab.marker(step.strategy) {
            ctx.push(m);
        }
        for (t, &tok) in step.tokens.iter().enumerate() {
            on_token(&ctx, i, t, tok, step.old_token_logprobs[t])?;
            ctx.push(tok);
        }
        ctx.truncate(base);
        ctx.extend_from_slice(&step.tokens);
    }
    if let Some(old) = rollout.termination_logprob {
        on_plan(&ctx, PlanSlot { strategy: Strategy::Termination, old, slots: 1 })?;
    }
    Ok(())
}

fn check_fresh(rollout: &Rollout) -> Result<(), MarlError> {
    let stale = |m: String| Err(MarlError::StaleRollout(format!("rollout {}: {m}", rollout.question_id)));
    if rollout.terminated_by_planner != rollout.termination_logprob.is_some() {
        return stale("termination log-probability missing".into());
    }
    for (i, s) in rollout.steps.iter().enumerate() {
        if s.old_token_logprobs.len() != s.tokens.len() {
            return stale(format!("step {i} lacks behavior log-probabilities"));
        }
        if !s.old_plan_logprob.is_finite() || s.old_token_logprobs.iter().any(|x| !x.is_finite()) {
            return stale(format!("step {i} has non-finite behavior log-probabilities"));
        }
    }
    match rollout.termination_logprob {
        Some(x) if !x.is_finite() => stale("non-finite termination log-probability".into()),
        _ => Ok(()),
    }
}

pub fn current_logprobs(
    question: &Question,
    rollout: &Rollout,
    planner: &Policy,
    reasoner: &Policy,
    vocab: &Vocab,
    temperature: f64,
) -> Result<CurrentLogprobs, MarlError> {
    let mut plans = Vec::new();
    let mut tokens: Vec<Vec<f64>> = rollout.steps.iter().map(|s| Vec::with_capacity(s.tokens.len())).collect();
    replay(
        question,
        rollout,
        vocab,
        |ctx, slot| {
            plans.push(planner.log_prob(ctx, slot.strategy.id(), temperature)?);
            Ok(())
        },
        |ctx, step, _, tok, _| {
            tokens[step].push(reasoner.log_prob(ctx, tok, temperature)?);
            Ok(())
        },
    )?;
    Ok(CurrentLogprobs { plans, tokens })
}

/// Value and `d/d(current log-prob)` of `min(ρA, clip(ρ, 1±ε)A) − β·kl`.
fn slot_term(cur: f64, old: f64, reference: f64, adv: f64, w: &ObjectiveWeights) -> (f64, f64) {
    let rho = (cur - old).exp();
    let clipped = rho.clamp(1.0 - w.clip_eps, 1.0 + w.clip_eps);
    let (surr, d_surr) = if rho * adv <= clipped * adv { (rho * adv, rho * adv) } else { (clipped * adv, 0.0) };
    let r = (reference - cur).exp();
    (surr - w.beta * kl_token(cur, reference), d_surr - w.beta * (1.0 - r))
}

/// One surrogate term: an action taken in some context.
struct SlotEntry {
    target: usize,
    old: f64,
    advantage: f64,
    /// Weight of this term in the objective.
    coef: f64,
    rollout: usize,
    /// Weight of this term in the rollout's KL sum.
    kl_weight: f64,
}

/// Terms grouped by the context window the network reads, in first-seen order.
#[derive(Default)]
struct SharedContexts {
    index: HashMap<Vec<TokenId>, usize>,
    groups: Vec<(Vec<TokenId>, Vec<SlotEntry>)>,
}

impl SharedContexts {
    fn push(&mut self, window: Vec<TokenId>, entry: SlotEntry) {
        let next = self.groups.len();
        let i = *self.index.entry(window.clone()).or_insert(next);
        if i == next {
            self.groups.push((window, Vec::new()));
        }
        self.groups[i].1.push(entry);
    }

    /// Objective value, accumulating loss gradients (of the negated objective)
    /// into `buf` and per-rollout KL into `kl`.
    fn accumulate(
        &self,
        policy: &Policy,
        reference: &Policy,
        w: &ObjectiveWeights,
        buf: &mut GradBuffer,
        kl: &mut [f64],
    ) -> Result<f64, MarlError> {
        let mut obj = 0.0;
        for (window, entries) in &self.groups {
            let ref_lp = reference.log_probs(window, w.temperature)?;
            policy.backward_dlogp(window, w.temperature, buf, |lp| {
                let mut up = vec![0.0; lp.len()];
                for e in entries {
                    let (cur, reference) = (lp[e.target], ref_lp[e.target]);
                    let (v, d) = slot_term(cur, e.old, reference, e.advantage, w);
                    obj += e.coef * v;
                    up[e.target] -= e.coef * d;
                    kl[e.rollout] += e.kl_weight * kl_token(cur, reference);
                }
                up
            })?;
        }
        Ok(obj)
    }
}

/// Loss `−mean_o J_o` and its gradients for both policies, where
///
/// `J_o = λ · mean_planner_slots(term) + (1 − λ) · mean_tokens(term)`.
///
/// Each plan's term is repeated over the tokens of the step it governs; the
/// final Termination plan occupies one slot of its own. Gradients flow only
/// through `planner` and `reasoner`; the references enter the KL term. Terms
/// whose contexts share a window are evaluated with one pass per window.
pub fn joint_loss_and_grads(
    groups: &[GroupBatch],
    planner: &Policy,
    reasoner: &Policy,
    ref_planner: &Policy,
    ref_reasoner: &Policy,
    vocab: &Vocab,
    w: &ObjectiveWeights,
) -> Result<JointOutput, MarlError> {
    let total: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    let mut plan_terms = SharedContexts::default();
    let mut token_terms = SharedContexts::default();
    let mut sizes = Vec::with_capacity(total);
    for g in groups {
        for (j, rollout) in g.rollouts.iter().enumerate() {
            check_fresh(rollout)?;
            let r = sizes.len();
            let n_tokens = rollout.token_count();
            let n_slots = n_tokens + usize::from(rollout.terminated_by_planner);
            sizes.push((n_slots, n_tokens));
            let (a_p, a_r) = (g.planner_advantages[j], g.reasoner_advantages[j]);
            let cp = w.lambda / (n_slots.max(1) as f64 * total as f64);
            let cr = (1.0 - w.lambda) / (n_tokens.max(1) as f64 * total as f64);
            replay(
                &g.question,
                rollout,
                vocab,
                |ctx, slot| {
                    let k = slot.slots as f64;
                    let entry = SlotEntry {
                        target: slot.strategy.id(),
                        old: slot.old,
                        advantage: a_p,
                        coef: cp * k,
                        rollout: r,
                        kl_weight: k,
                    };
                    plan_terms.push(planner.window(ctx)?, entry);
                    Ok(())
                },
                |ctx, _, _, tok, old| {
                    let entry = SlotEntry { target: tok, old, advantage: a_r, coef: cr, rollout: r, kl_weight: 1.0 };
                    token_terms.push(reasoner.window(ctx)?, entry);
                    Ok(())
                },
            )?;
        }
    }
    let mut pbuf = GradBuffer::new(planner.params());
    let mut rbuf = GradBuffer::new(reasoner.params());
    let mut kl_p = vec![0.0; total];
    let mut kl_r = vec![0.0; total];
    let obj_p = plan_terms.accumulate(planner, ref_planner, w, &mut pbuf, &mut kl_p)?;
    let obj_r = token_terms.accumulate(reasoner, ref_reasoner, w, &mut rbuf, &mut kl_r)?;

    let mean_kl_p = kl_p.iter().zip(&sizes).map(|(kl, (slots, _))| kl / (*slots).max(1) as f64).sum::<f64>();
    let with_tokens: Vec<f64> =
        kl_r.iter().zip(&sizes).filter(|(_, (_, n))| *n > 0).map(|(kl, (_, n))| kl / *n as f64).collect();
    Ok(JointOutput {
        loss: -(obj_p + obj_r),
        planner_grads: pbuf.finish(planner.params())?,
        reasoner_grads: rbuf.finish(reasoner.params())?,
        kl_planner: if total > 0 { mean_kl_p / total as f64 } else { 0.0 },
        kl_reasoner: if with_tokens.is_empty() { 0.0 } else { with_tokens.iter().sum::<f64>() / with_tokens.len() as f64 },
    })
}
