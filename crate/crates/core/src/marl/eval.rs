use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::{sample_rollout, SampleSettings};
use super::train::{check_compatible, train, TrainObserver, TrainOutcome, Workers};
use super::{stream_seed, MarlError};
use crate::analysis::count_strategies_rollout;
use crate::domain::{PlannerSource, Question, RunConfig, Strategy, TaskKind, Vocab};
use crate::env::{generate_questions_from, lock_accuracy, plan_sequence_matches, task_success, TaskSpec};
use crate::model::{Policy, PolicyParams, PolicySpec};

const EVAL_STREAM: u64 = 0x4556_414c;
/// Held-out question ids start here, far above any training id.
const EVAL_ID_BASE: u64 = 1 << 48;

/// The held-out evaluation set for `task` under run seed `seed`.
pub fn eval_questions(task: &TaskSpec, seed: u64, count: usize) -> Result<Vec<Question>, MarlError> {
    Ok(generate_questions_from(task, stream_seed(seed, EVAL_STREAM, 0), count, EVAL_ID_BASE)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub planner_temp: f64,
    pub reasoner_temp: f64,
    pub n_max: usize,
    pub l_max: usize,
    pub planner_source: PlannerSource,
    pub mask: Option<Strategy>,
    pub seed: u64,
}

impl EvalSettings {
    pub fn from_config(cfg: &RunConfig) -> EvalSettings {
        EvalSettings {
            planner_temp: cfg.temp_eval_planner,
            reasoner_temp: cfg.temp_eval_reasoner,
            n_max: cfg.n_max,
            l_max: cfg.l_max,
            planner_source: cfg.planner_source,
            mask: None,
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: usize,
    /// Share of questions solved, per the task's success rule.
    pub accuracy: f64,
    /// StrategyLock only: share whose plan sequence is exactly the lock followed by Termination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_accuracy: Option<f64>,
    /// StrategyLock only: share passing the strict marker/OK conformance check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_accuracy: Option<f64>,
    pub mean_strategies_per_question: f64,
    pub mean_trace_length: f64,
}

/// One rollout per question with the evaluation temperatures.
pub fn evaluate(
    planner: &Policy,
    reasoner: &Policy,
    vocab: &Vocab,
    questions: &[Question],
    s: &EvalSettings,
) -> Result<EvalReport, MarlError> {
    if questions.is_empty() {
        return Err(MarlError::EmptyEvalSet);
    }
    check_compatible(planner.params(), reasoner.params(), vocab)?;
    let sample = SampleSettings {
        planner_temp: s.planner_temp,
        reasoner_temp: s.reasoner_temp,
        n_max: s.n_max,
        l_max: s.l_max,
        planner_source: s.planner_source,
        mask: s.mask,
    };
    // (success, exact plan sequence, strict lock conformance, strategies, tokens)
    let rows: Vec<(bool, bool, bool, usize, usize)> = questions
        .par_iter()
        .map(|q| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(s.seed, EVAL_STREAM, q.id));
            let r = sample_rollout(q, planner, reasoner, vocab, &sample, &mut rng)?;
            let lock = q.task == TaskKind::StrategyLock && lock_accuracy(q, &r, vocab)?;
            Ok((
                task_success(q, &r, vocab),
                plan_sequence_matches(q, &r),
                lock,
                count_strategies_rollout(&r),
                r.token_count(),
            ))
        })
        .collect::<Result<_, MarlError>>()?;
    let n = rows.len() as f64;
    let share = |f: fn(&(bool, bool, bool, usize, usize)) -> bool| rows.iter().filter(|x| f(x)).count() as f64 / n;
    let is_lock = questions.iter().all(|q| q.task == TaskKind::StrategyLock);
    Ok(EvalReport {
        questions: rows.len(),
        accuracy: share(|x| x.0),
        plan_accuracy: is_lock.then(|| share(|x| x.1)),
        lock_accuracy: is_lock.then(|| share(|x| x.2)),
        mean_strategies_per_question: rows.iter().map(|x| x.3 as f64).sum::<f64>() / n,
        mean_trace_length: rows.iter().map(|x| x.4 as f64).sum::<f64>() / n,
    })
}

/// Evaluates a frozen planner with `reasoner`, or with a freshly initialized
/// reasoner seeded from the config when none is given.
pub fn plugin_eval(
    planner: &PolicyParams,
    reasoner: Option<&PolicyParams>,
    task: &TaskSpec,
    cfg: &RunConfig,
    mask: Option<Strategy>,
) -> Result<EvalReport, MarlError> {
    let vocab = Vocab::standard();
    let reasoner = match reasoner {
        Some(r) => r.clone(),
        None => {
            let spec = PolicySpec::reasoner(&cfg.reasoner, vocab.len());
            PolicyParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0x5245_4153, 0)))
        }
    };
    check_compatible(planner, &reasoner, &vocab)?;
    let questions = eval_questions(task, cfg.seed, cfg.eval_questions)?;
    let settings = EvalSettings { mask, ..EvalSettings::from_config(cfg) };
    let p = Policy::new(planner.clone(), vocab.pad);
    let r = Policy::new(reasoner, vocab.pad);
    Workers::new(cfg.threads)?.run(|| evaluate(&p, &r, &vocab, &questions, &settings))
}

/// Accuracy on the new and original tasks before and after continued training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinueReport {
    pub new_before: f64,
    pub new_after: f64,
    pub original_before: f64,
    pub original_after: f64,
    pub new_delta: f64,
    pub original_delta: f64,
    pub updates: u64,
}

/// Resumes training from `planner` (with fresh optimizer state) on `cfg.task`,
/// then reports accuracy on `cfg.task` and on `original` before and after.
pub fn continue_train(
    planner: PolicyParams,
    reasoner: PolicyParams,
    original: &TaskSpec,
    cfg: &RunConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TrainOutcome, ContinueReport), MarlError> {
    let vocab = Vocab::standard();
    check_compatible(&planner, &reasoner, &vocab)?;
    let new_qs = eval_questions(&cfg.task, cfg.seed, cfg.eval_questions)?;
    let old_qs = eval_questions(original, cfg.seed, cfg.eval_questions)?;
    let settings = EvalSettings::from_config(cfg);
    let workers = Workers::new(cfg.threads)?;
    let score = |p: &PolicyParams, r: &PolicyParams| -> Result<(f64, f64), MarlError> {
        let (p, r) = (Policy::new(p.clone(), vocab.pad), Policy::new(r.clone(), vocab.pad));
        let new = workers.run(|| evaluate(&p, &r, &vocab, &new_qs, &settings))?.accuracy;
        let old = workers.run(|| evaluate(&p, &r, &vocab, &old_qs, &settings))?.accuracy;
        Ok((new, old))
    };
    let (new_before, original_before) = score(&planner, &reasoner)?;
    let outcome = train(cfg, planner, reasoner, observer)?;
    let (new_after, original_after) = score(&outcome.planner, &outcome.reasoner)?;
    let report = ContinueReport {
        new_before,
        new_after,
        original_before,
        original_after,
        new_delta: new_after - new_before,
        original_delta: original_after - original_before,
        updates: outcome.updates,
    };
    Ok((outcome, report))
}
