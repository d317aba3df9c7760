use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{stream_seed, MarlError};
use crate::domain::{extract_answer, PlannerSource, Question, Rollout, Step, Strategy, TokenId, Vocab};
use crate::model::{sample_categorical, sample_masked, Policy};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSettings {
    pub planner_temp: f64,
    pub reasoner_temp: f64,
    pub n_max: usize,
    pub l_max: usize,
    pub planner_source: PlannerSource,
    /// Strategy the planner may never select.
    pub mask: Option<Strategy>,
}

/// Rollouts sampled together in one worker task; they share logit memos.
const CHUNK: usize = 32;

/// Logits by context window.
struct Memo<'a> {
    policy: &'a Policy,
    seen: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl<'a> Memo<'a> {
    fn new(policy: &'a Policy) -> Memo<'a> {
        Memo { policy, seen: HashMap::new() }
    }

    fn logits(&mut self, context: &[TokenId]) -> Result<&[f64], MarlError> {
        let window = self.policy.window(context)?;
        Ok(match self.seen.entry(window) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let logits = self.policy.logits(e.key())?;
                e.insert(logits)
            }
        })
    }
}

fn choose_plan<R: Rng>(
    planner: &mut Memo,
    context: &[TokenId],
    s: &SampleSettings,
    rng: &mut R,
) -> Result<(Strategy, f64), MarlError> {
    let mask = s.mask.map(|m| m.id());
    let idx_lp = match s.planner_source {
        PlannerSource::Learned => sample_masked(planner.logits(context)?, s.planner_temp, mask, rng)?,
        PlannerSource::UniformRandom => {
            let allowed: Vec<usize> = (0..Strategy::COUNT).filter(|&i| Some(i) != mask).collect();
            let pick = allowed[rng.gen_range(0..allowed.len())];
            (pick, -(allowed.len() as f64).ln())
        }
    };
    let strategy = Strategy::from_id(idx_lp.0).ok_or_else(|| {
        MarlError::VocabMismatch(format!("planner produced action {} outside the strategy set", idx_lp.0))
    })?;
    Ok((strategy, idx_lp.1))
}

/// One plan/step trace.
///
/// The planner sees `prompt ‖ trace`; the reasoner sees `prompt ‖ trace ‖ marker`
/// plus the tokens of the current step, and decodes until SEP or `l_max` tokens.
pub fn sample_rollout<R: Rng>(
    question: &Question,
    planner: &Policy,
    reasoner: &Policy,
    vocab: &Vocab,
    s: &SampleSettings,
    rng: &mut R,
) -> Result<Rollout, MarlError> {
    rollout_with(question, &mut Memo::new(planner), &mut Memo::new(reasoner), vocab, s, rng)
}

fn rollout_with<R: Rng>(
    question: &Question,
    planner: &mut Memo,
    reasoner: &mut Memo,
    vocab: &Vocab,
    s: &SampleSettings,
    rng: &mut R,
) -> Result<Rollout, MarlError> {
    let mut context = question.prompt_tokens.clone();
    let mut steps = Vec::new();
    let mut termination_logprob = None;
    let (mut plan, mut plan_lp) = choose_plan(planner, &context, s, rng)?;
    loop {
        if plan.is_termination() {
            termination_logprob = Some(plan_lp);
            break;
        }
        let base = context.len();
        if let Some(m) = vocab.marker(plan) {
            context.push(m);
        }
        let mut tokens = Vec::new();
        let mut lps = Vec::new();
        while tokens.len() < s.l_max {
            let (tok, lp) = sample_categorical(reasoner.logits(&context)?, s.reasoner_temp, rng)?;
            tokens.push(tok);
            lps.push(lp);
            context.push(tok);
            if tok == vocab.sep {
                break;
            }
        }
        context.truncate(base);
        context.extend_from_slice(&tokens);
        steps.push(Step { strategy: plan, tokens, old_token_logprobs: lps, old_plan_logprob: plan_lp });
        if steps.len() >= s.n_max {
            break;
        }
        (plan, plan_lp) = choose_plan(planner, &context, s, rng)?;
    }
    let terminated = termination_logprob.is_some();
    let mut rollout = Rollout {
        question_id: question.id,
        steps,
        terminated_by_planner: terminated,
        truncated: !terminated,
        termination_logprob,
        extracted_answer: None,
    };
    rollout.extracted_answer = extract_answer(&rollout, vocab);
    Ok(rollout)
}

/// `group_size` rollouts per question. Rollout `j` of question `q` draws from its
/// own stream seeded by `(seed, q.id, j)`, so the result does not depend on
/// scheduling or thread count.
pub fn sample_groups(
    questions: &[Question],
    planner: &Policy,
    reasoner: &Policy,
    vocab: &Vocab,
    s: &SampleSettings,
    group_size: usize,
    seed: u64,
) -> Result<Vec<Vec<Rollout>>, MarlError> {
    let chunks: Vec<(usize, usize)> = (0..questions.len())
        .flat_map(|q| (0..group_size).step_by(CHUNK).map(move |start| (q, start)))
        .collect();
    let sampled: Vec<Vec<Rollout>> = chunks
        .into_par_iter()
        .map(|(qi, start)| {
            let q = &questions[qi];
            let (mut pm, mut rm) = (Memo::new(planner), Memo::new(reasoner));
            (start..(start + CHUNK).min(group_size))
                .map(|j| {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, q.id, j as u64));
                    rollout_with(q, &mut pm, &mut rm, vocab, s, &mut rng)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut it = sampled.into_iter().flatten();
    Ok(questions.iter().map(|_| it.by_ref().take(group_size).collect()).collect())
}

pub fn interactive_sample(
    question: &Question,
    planner: &Policy,
    reasoner: &Policy,
    vocab: &Vocab,
    s: &SampleSettings,
    group_size: usize,
    seed: u64,
) -> Result<Vec<Rollout>, MarlError> {
    Ok(sample_groups(std::slice::from_ref(question), planner, reasoner, vocab, s, group_size, seed)?.remove(0))
}
