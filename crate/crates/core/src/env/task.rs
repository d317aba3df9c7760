use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::domain::{extract_answer, Op, Question, Rollout, Strategy, TaskKind, TokenId, Vocab};

pub const MODULUS: u8 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: TaskKind,
    /// Operator count (ChainArithmetic) or lock length (StrategyLock).
    pub depth: usize,
    #[serde(default = "default_modulus")]
    pub modulus: u8,
    /// Strategies a lock may draw from; defaults to all eight non-Termination ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_alphabet: Option<Vec<Strategy>>,
}

fn default_modulus() -> u8 {
    MODULUS
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::strategy_lock(2)
    }
}

impl TaskSpec {
    pub fn chain_arithmetic(depth: usize) -> TaskSpec {
        TaskSpec { name: TaskKind::ChainArithmetic, depth, modulus: MODULUS, lock_alphabet: None }
    }

    pub fn strategy_lock(depth: usize) -> TaskSpec {
        TaskSpec { name: TaskKind::StrategyLock, depth, modulus: MODULUS, lock_alphabet: None }
    }

    pub fn with_alphabet(mut self, alphabet: Vec<Strategy>) -> TaskSpec {
        self.lock_alphabet = Some(alphabet);
        self
    }

    /// Locks drawn from ids 1–4 ("A") or 5–8 ("B"); the two never share a strategy.
    pub fn lock_partition(depth: usize, second_half: bool) -> TaskSpec {
        let ids = if second_half { 5..=8 } else { 1..=4 };
        Self::strategy_lock(depth).with_alphabet(ids.filter_map(Strategy::from_id).collect())
    }

    pub fn alphabet(&self) -> Vec<Strategy> {
        self.lock_alphabet
            .clone()
            .unwrap_or_else(|| Strategy::ALL.iter().copied().filter(|s| !s.is_termination()).collect())
    }

    pub fn prompt_len(&self) -> usize {
        match self.name {
            TaskKind::ChainArithmetic => 2 * self.depth + 2,
            TaskKind::StrategyLock => self.depth + 2,
        }
    }

    /// `n_max` is the rollout step cap the task will be sampled under, if known.
    pub fn validate(&self, n_max: usize) -> Result<(), EnvError> {
        if self.depth < 1 {
            return Err(EnvError::InvalidSpec("depth must be at least 1".into()));
        }
        match self.name {
            TaskKind::ChainArithmetic => {
                if self.modulus != MODULUS {
                    return Err(EnvError::InvalidSpec("ChainArithmetic uses modulus 10".into()));
                }
                if self.lock_alphabet.is_some() {
                    return Err(EnvError::InvalidSpec("lock_alphabet applies to StrategyLock only".into()));
                }
            }
            TaskKind::StrategyLock => {
                if self.depth + 1 > n_max {
                    return Err(EnvError::InvalidSpec(format!(
                        "lock length {} needs n_max >= {}",
                        self.depth,
                        self.depth + 1
                    )));
                }
                let alpha = self.alphabet();
                if alpha.is_empty() || alpha.iter().any(|s| s.is_termination()) {
                    return Err(EnvError::InvalidSpec("lock alphabet must be non-empty and exclude Termination".into()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name {
            TaskKind::ChainArithmetic => write!(f, "chain-arithmetic:{}", self.depth),
            TaskKind::StrategyLock => {
                write!(f, "strategy-lock:{}", self.depth)?;
                match &self.lock_alphabet {
                    None => Ok(()),
                    Some(a) => {
                        let ids: Vec<String> = a.iter().map(|s| s.id().to_string()).collect();
                        write!(f, ":{}", ids.join(","))
                    }
                }
            }
        }
    }
}

impl FromStr for TaskSpec {
    type Err = EnvError;

    /// `chain-arithmetic:D`, `strategy-lock:D`, `strategy-lock:D:A`, `strategy-lock:D:B`
    /// or `strategy-lock:D:1,2,3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnvError::InvalidSpec(format!("cannot parse task {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let depth: usize = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let name = parts[0].to_ascii_lowercase().replace('_', "-");
        match (name.as_str(), parts.get(2)) {
            ("chain-arithmetic" | "chainarithmetic", None) => Ok(TaskSpec::chain_arithmetic(depth)),
            ("strategy-lock" | "strategylock", None) => Ok(TaskSpec::strategy_lock(depth)),
            ("strategy-lock" | "strategylock", Some(&"A")) => Ok(TaskSpec::lock_partition(depth, false)),
            ("strategy-lock" | "strategylock", Some(&"B")) => Ok(TaskSpec::lock_partition(depth, true)),
            ("strategy-lock" | "strategylock", Some(list)) => {
                let alpha = list
                    .split(',')
                    .map(|x| x.parse::<Strategy>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TaskSpec::strategy_lock(depth).with_alphabet(alpha))
            }
            _ => Err(bad()),
        }
    }
}

/// Left-to-right fold with a non-negative mod reduction after each operation.
pub fn fold_chain(first: u8, rest: &[(Op, u8)], modulus: u8) -> u8 {
    rest.iter()
        .fold(first as i64, |acc, &(op, x)| op.apply_mod(acc, x as i64, modulus as i64)) as u8
}

pub fn generate_questions(task: &TaskSpec, seed: u64, count: usize) -> Result<Vec<Question>, EnvError> {
    generate_questions_from(task, seed, count, 0)
}

/// Deterministic in `(task, seed, count)`; ids run from `first_id`.
pub fn generate_questions_from(
    task: &TaskSpec,
    seed: u64,
    count: usize,
    first_id: u64,
) -> Result<Vec<Question>, EnvError> {
    if count < 1 {
        return Err(EnvError::InvalidSpec("count must be at least 1".into()));
    }
    task.validate(usize::MAX)?;
    let vocab = Vocab::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = task.alphabet();
    let questions = (0..count as u64)
        .map(|i| {
            let id = first_id + i;
            match task.name {
                TaskKind::ChainArithmetic => {
                    let first: u8 = rng.gen_range(0..10);
                    let rest: Vec<(Op, u8)> = (0..task.depth)
                        .map(|_| (Op::ALL[rng.gen_range(0..3)], rng.gen_range(0..10)))
                        .collect();
                    let mut prompt = vec![vocab.bos, vocab.digit(first)];
                    for &(op, x) in &rest {
                        prompt.push(vocab.op(op));
                        prompt.push(vocab.digit(x));
                    }
                    let answer = fold_chain(first, &rest, task.modulus);
                    Question {
                        id,
                        task: TaskKind::ChainArithmetic,
                        prompt_tokens: prompt,
                        ground_truth: vec![vocab.digit(answer)],
                        lock_sequence: None,
                    }
                }
                TaskKind::StrategyLock => {
                    let lock: Vec<Strategy> =
                        (0..task.depth).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
                    let mut prompt = vec![vocab.bos, vocab.lock];
                    prompt.extend(lock.iter().map(|s| vocab.digit(s.id() as u8)));
                    Question {
                        id,
                        task: TaskKind::StrategyLock,
                        prompt_tokens: prompt,
                        ground_truth: vec![vocab.ok],
                        lock_sequence: Some(lock),
                    }
                }
            }
        })
        .collect();
    Ok(questions)
}

/// Exact match against the ground truth; an absent answer is wrong.
pub fn verify(question: &Question, answer: Option<&[TokenId]>) -> bool {
    answer == Some(question.ground_truth.as_slice())
}

/// A step follows a non-Continuation plan iff it opens with that plan's marker,
/// and follows Continuation iff it opens with no marker at all.
pub fn follows_plan(strategy: Strategy, tokens: &[TokenId], vocab: &Vocab) -> bool {
    let Some(&first) = tokens.first() else {
        return false;
    };
    match strategy {
        Strategy::Termination => false,
        Strategy::Continuation => !vocab.is_marker(first),
        s => vocab.marker(s) == Some(first),
    }
}

pub fn format_ok(rollout: &Rollout, vocab: &Vocab, l_max: usize) -> bool {
    let n = rollout.steps.len();
    if n == 0 {
        return false;
    }
    if rollout.steps.iter().any(|s| s.tokens.len() > l_max || s.tokens.last() != Some(&vocab.sep)) {
        return false;
    }
    let ans_total: usize = rollout
        .steps
        .iter()
        .map(|s| s.tokens.iter().filter(|&&t| t == vocab.ans).count())
        .sum();
    if ans_total != 1 {
        return false;
    }
    let last = &rollout.steps[n - 1].tokens;
    match last.iter().position(|&t| t == vocab.ans) {
        // ANS, at least one token, then the closing SEP
        Some(pos) => last.len() >= pos + 3,
        None => false,
    }
}

/// Plans (excluding the final Termination) equal the lock, and the planner terminated.
pub fn plan_sequence_matches(question: &Question, rollout: &Rollout) -> bool {
    let Some(lock) = &question.lock_sequence else {
        return false;
    };
    rollout.terminated_by_planner
        && rollout.steps.len() == lock.len()
        && rollout.steps.iter().zip(lock).all(|(s, k)| s.strategy == *k)
}

/// Strict StrategyLock conformance: the plan sequence matches, every step opens
/// per [`follows_plan`] and continues with OK, and the final step answers `OK`.
pub fn lock_accuracy(question: &Question, rollout: &Rollout, vocab: &Vocab) -> Result<bool, EnvError> {
    if question.task != TaskKind::StrategyLock {
        return Err(EnvError::WrongTask);
    }
    if !plan_sequence_matches(question, rollout) {
        return Ok(false);
    }
    let steps_ok = rollout.steps.iter().all(|s| {
        let body = if s.strategy == Strategy::Continuation { 0 } else { 1 };
        follows_plan(s.strategy, &s.tokens, vocab) && s.tokens.get(body) == Some(&vocab.ok)
    });
    Ok(steps_ok && verify(question, extract_answer(rollout, vocab).as_deref()))
}

/// Task-level correctness used for `r_acc` and for reported accuracy.
///
/// ChainArithmetic checks the extracted answer. StrategyLock requires the plan
/// sequence to match the lock and every step to follow its plan.
pub fn task_success(question: &Question, rollout: &Rollout, vocab: &Vocab) -> bool {
    match question.task {
        TaskKind::ChainArithmetic => verify(question, extract_answer(rollout, vocab).as_deref()),
        TaskKind::StrategyLock => {
            plan_sequence_matches(question, rollout)
                && rollout.steps.iter().all(|s| follows_plan(s.strategy, &s.tokens, vocab))
        }
    }
}
