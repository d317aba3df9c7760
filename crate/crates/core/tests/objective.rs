//! The joint objective against a direct per-rollout recomputation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsim::env::{generate_questions, TaskSpec};
use rsim::marl::{
    current_logprobs, interactive_sample, joint_loss_and_grads, kl_token, GroupBatch, ObjectiveWeights, SampleSettings,
};
use rsim::model::{Grads, Policy, PolicyParams, PolicySpec};
use rsim::{PlannerSource, PolicyShape, Vocab};

const L_MAX: usize = 4;

fn shape() -> PolicyShape {
    PolicyShape { embed_dim: 4, context_window: 6, hidden_dims: vec![8] }
}

fn params(spec: &PolicySpec, seed: u64) -> PolicyParams {
    PolicyParams::init_uniform(spec, 0.4, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `params` with every scalar moved by up to `scale`.
fn jitter(p: &PolicyParams, scale: f64, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = p.clone();
    if scale == 0.0 {
        return out;
    }
    for t in &mut out.tensors {
        for x in &mut t.data {
            *x += rng.gen_range(-scale..scale);
        }
    }
    out
}

struct Setup {
    vocab: Vocab,
    groups: Vec<GroupBatch>,
    planner: PolicyParams,
    reasoner: PolicyParams,
    ref_planner: Policy,
    ref_reasoner: Policy,
}

/// Rollouts sampled from a behavior pair; the current pair is a jittered copy
/// (ratios away from 1) and the references are unrelated initializations.
fn setup(task: TaskSpec, jitter_scale: f64, seed: u64) -> Setup {
    let vocab = Vocab::standard();
    let p_spec = PolicySpec::planner(&shape(), vocab.len());
    let r_spec = PolicySpec::reasoner(&shape(), vocab.len());
    let (bp, br) = (params(&p_spec, seed), params(&r_spec, seed + 1));
    let behavior_p = Policy::new(bp.clone(), vocab.pad);
    let behavior_r = Policy::new(br.clone(), vocab.pad);
    let s = SampleSettings {
        planner_temp: 1.0,
        reasoner_temp: 1.0,
        n_max: 4,
        l_max: L_MAX,
        planner_source: PlannerSource::Learned,
        mask: None,
    };
    let groups = generate_questions(&task, seed, 3)
        .unwrap()
        .into_iter()
        .map(|q| {
            let rollouts = interactive_sample(&q, &behavior_p, &behavior_r, &vocab, &s, 6, seed).unwrap();
            GroupBatch::new(q, rollouts, &vocab, L_MAX).unwrap()
        })
        .collect();
    Setup {
        groups,
        planner: jitter(&bp, jitter_scale, seed + 2),
        reasoner: jitter(&br, jitter_scale, seed + 3),
        ref_planner: Policy::new(params(&p_spec, seed + 4), vocab.pad),
        ref_reasoner: Policy::new(params(&r_spec, seed + 5), vocab.pad),
        vocab,
    }
}

fn term(cur: f64, old: f64, reference: f64, adv: f64, w: &ObjectiveWeights) -> f64 {
    let rho = (cur - old).exp();
    let clipped = rho.clamp(1.0 - w.clip_eps, 1.0 + w.clip_eps);
    (rho * adv).min(clipped * adv) - w.beta * kl_token(cur, reference)
}

/// `−mean_o [λ·J_planner(o) + (1−λ)·J_reasoner(o)]`, one rollout at a time.
fn direct_loss(s: &Setup, planner: &PolicyParams, reasoner: &PolicyParams, w: &ObjectiveWeights) -> f64 {
    let p = Policy::new(planner.clone(), s.vocab.pad);
    let r = Policy::new(reasoner.clone(), s.vocab.pad);
    let mut total = 0.0;
    let mut count = 0usize;
    for g in &s.groups {
        for (j, o) in g.rollouts.iter().enumerate() {
            let cur = current_logprobs(&g.question, o, &p, &r, &s.vocab, w.temperature).unwrap();
            let reference = current_logprobs(&g.question, o, &s.ref_planner, &s.ref_reasoner, &s.vocab, w.temperature).unwrap();
            let (a_p, a_r) = (g.planner_advantages[j], g.reasoner_advantages[j]);
            let mut plan_sum = 0.0;
            let mut token_sum = 0.0;
            let mut n_tokens = 0usize;
            for (i, step) in o.steps.iter().enumerate() {
                let weight = step.tokens.len() as f64;
                plan_sum += weight * term(cur.plans[i], step.old_plan_logprob, reference.plans[i], a_p, w);
                for (t, &old) in step.old_token_logprobs.iter().enumerate() {
                    token_sum += term(cur.tokens[i][t], old, reference.tokens[i][t], a_r, w);
                }
                n_tokens += step.tokens.len();
            }
            let mut n_slots = n_tokens;
            if let Some(old) = o.termination_logprob {
                let i = o.steps.len();
                plan_sum += term(cur.plans[i], old, reference.plans[i], a_p, w);
                n_slots += 1;
            }
            let j_p = if n_slots > 0 { plan_sum / n_slots as f64 } else { 0.0 };
            let j_r = if n_tokens > 0 { token_sum / n_tokens as f64 } else { 0.0 };
            total += w.lambda * j_p + (1.0 - w.lambda) * j_r;
            count += 1;
        }
    }
    -total / count as f64
}

fn joint(s: &Setup, w: &ObjectiveWeights) -> rsim::marl::JointOutput {
    let p = Policy::new(s.planner.clone(), s.vocab.pad);
    let r = Policy::new(s.reasoner.clone(), s.vocab.pad);
    joint_loss_and_grads(&s.groups, &p, &r, &s.ref_planner, &s.ref_reasoner, &s.vocab, w).unwrap()
}

fn weights(lambda: f64, beta: f64, clip_eps: f64) -> ObjectiveWeights {
    ObjectiveWeights { lambda, beta, clip_eps, temperature: 1.0 }
}

/// Central differences of `direct_loss` at randomly chosen scalars of one policy.
fn check_fd(s: &Setup, w: &ObjectiveWeights, planner_side: bool, grads: &Grads, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = if planner_side { &s.planner } else { &s.reasoner };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let ti = rng.gen_range(0..base.tensors.len());
        let xi = rng.gen_range(0..base.tensors[ti].data.len());
        let eval = |delta: f64| {
            let mut moved = base.clone();
            moved.tensors[ti].data[xi] += delta;
            if planner_side {
                direct_loss(s, &moved, &s.reasoner, w)
            } else {
                direct_loss(s, &s.planner, &moved, w)
            }
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let analytic = grads.get(ti, xi);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

#[test]
fn loss_matches_direct_recomputation() {
    for (task, seed) in [(TaskSpec::strategy_lock(2), 1), (TaskSpec::chain_arithmetic(2), 2)] {
        let s = setup(task, 0.05, seed);
        for w in [weights(0.7, 0.04, 0.2), weights(0.3, 0.5, 0.05), weights(1.0, 0.0, f64::INFINITY)] {
            let out = joint(&s, &w);
            let direct = direct_loss(&s, &s.planner, &s.reasoner, &w);
            assert!((out.loss - direct).abs() < 1e-12, "{} vs {direct}", out.loss);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (task, seed) in [(TaskSpec::strategy_lock(2), 3), (TaskSpec::chain_arithmetic(2), 4)] {
        let s = setup(task, 0.05, seed);
        let w = weights(0.6, 0.1, 0.2);
        let out = joint(&s, &w);
        let p_err = check_fd(&s, &w, true, &out.planner_grads, 40, seed);
        let r_err = check_fd(&s, &w, false, &out.reasoner_grads, 40, seed + 100);
        assert!(p_err < 1e-5, "planner relative error {p_err:e}");
        assert!(r_err < 1e-5, "reasoner relative error {r_err:e}");
    }
}

#[test]
fn clipping_is_inactive_when_current_equals_behavior() {
    let s = setup(TaskSpec::strategy_lock(3), 0.0, 5);
    let clipped = joint(&s, &weights(0.7, 0.04, 0.2));
    let plain = joint(&s, &weights(0.7, 0.04, f64::INFINITY));
    assert!(clipped.planner_grads.max_abs_diff(&plain.planner_grads) < 1e-15);
    assert!(clipped.reasoner_grads.max_abs_diff(&plain.reasoner_grads) < 1e-15);
    assert!((clipped.loss - plain.loss).abs() < 1e-15);
}

#[test]
fn lambda_extremes_zero_one_side() {
    let s = setup(TaskSpec::strategy_lock(2), 0.05, 6);
    let planner_only = joint(&s, &weights(1.0, 0.1, 0.2));
    assert!(planner_only.reasoner_grads.is_zero());
    assert!(!planner_only.planner_grads.is_zero());
    let reasoner_only = joint(&s, &weights(0.0, 0.1, 0.2));
    assert!(reasoner_only.planner_grads.is_zero());
    assert!(!reasoner_only.reasoner_grads.is_zero());
}

#[test]
fn kl_is_zero_against_identical_references() {
    let mut s = setup(TaskSpec::strategy_lock(2), 0.05, 7);
    s.ref_planner = Policy::new(s.planner.clone(), s.vocab.pad);
    s.ref_reasoner = Policy::new(s.reasoner.clone(), s.vocab.pad);
    let out = joint(&s, &weights(0.5, 0.3, 0.2));
    assert_eq!(out.kl_planner, 0.0);
    assert_eq!(out.kl_reasoner, 0.0);
    let other = setup(TaskSpec::strategy_lock(2), 0.05, 7);
    let out = joint(&other, &weights(0.5, 0.3, 0.2));
    assert!(out.kl_planner > 0.0 && out.kl_reasoner > 0.0);
}
