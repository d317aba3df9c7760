use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::advantage::GroupBatch;
use super::eval::{eval_questions, evaluate, EvalSettings};
use super::objective::{joint_loss_and_grads, ObjectiveWeights};
use super::rollout::{sample_groups, SampleSettings};
use super::{stream_seed, MarlError};
use crate::domain::{RunConfig, Vocab};
use crate::env::generate_questions_from;
use crate::model::{adamw_step, cosine_lr, AdamWConfig, Grads, OptimizerState, Policy, PolicyParams, PolicyRole, PolicySpec};

const QUESTION_STREAM: u64 = 0x5155_4553;
const ROLLOUT_STREAM: u64 = 0x524f_4c4c;

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: u64,
    pub epoch: u64,
    pub stage: u8,
    pub lambda: f64,
    pub lr: f64,
    pub mean_planner_reward: f64,
    pub mean_reasoner_reward: f64,
    pub mean_r_acc: f64,
    pub mean_r_follow: f64,
    pub mean_r_penalty: f64,
    pub terminal_rate: f64,
    pub kl_planner: f64,
    pub kl_reasoner: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_strategies_per_question: Option<f64>,
}

impl UpdateMetrics {
    /// The record as one `metrics.jsonl` line, without the newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Receives progress from [`train`]. Both hooks default to doing nothing.
pub trait TrainObserver {
    fn on_update(&mut self, _metrics: &UpdateMetrics) -> Result<(), MarlError> {
        Ok(())
    }

    /// Called after the last update of every epoch.
    fn on_epoch_end(
        &mut self,
        _epoch: u64,
        _update: u64,
        _stage: u8,
        _planner: &PolicyParams,
        _reasoner: &PolicyParams,
    ) -> Result<(), MarlError> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Keeps every metrics record in memory.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog(pub Vec<UpdateMetrics>);

impl TrainObserver for MetricsLog {
    fn on_update(&mut self, m: &UpdateMetrics) -> Result<(), MarlError> {
        self.0.push(m.clone());
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub planner: PolicyParams,
    pub reasoner: PolicyParams,
    pub updates: u64,
    pub last_stage: u8,
}

/// Freshly initialized planner and reasoner for `cfg`, both drawn from one
/// ChaCha8 stream seeded with `cfg.seed` (planner first).
pub fn init_policies(cfg: &RunConfig) -> (PolicyParams, PolicyParams) {
    let vocab = Vocab::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let planner = PolicyParams::init(&PolicySpec::planner(&cfg.planner, vocab.len()), &mut rng);
    let reasoner = PolicyParams::init(&PolicySpec::reasoner(&cfg.reasoner, vocab.len()), &mut rng);
    (planner, reasoner)
}

pub(crate) fn check_compatible(planner: &PolicyParams, reasoner: &PolicyParams, vocab: &Vocab) -> Result<(), MarlError> {
    for (role, p) in [(PolicyRole::Planner, planner), (PolicyRole::Reasoner, reasoner)] {
        if p.spec.vocab_size != vocab.len() {
            return Err(MarlError::VocabMismatch(format!(
                "{role} expects {} tokens, vocabulary has {}",
                p.spec.vocab_size,
                vocab.len()
            )));
        }
        p.spec.validate_role(role)?;
    }
    Ok(())
}

/// Runs closures on a dedicated pool of `threads` workers, or on the global pool when 0.
pub(crate) struct Workers(Option<rayon::ThreadPool>);

impl Workers {
    pub(crate) fn new(threads: usize) -> Result<Workers, MarlError> {
        if threads == 0 {
            return Ok(Workers(None));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|p| Workers(Some(p)))
            .map_err(|e| MarlError::Config(crate::domain::ConfigError(format!("thread pool: {e}"))))
    }

    pub(crate) fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match &self.0 {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }
}

#[derive(Default)]
struct Tally {
    rollouts: usize,
    planner: f64,
    reasoner: f64,
    acc: f64,
    follow: f64,
    penalty: f64,
    terminal: f64,
}

impl Tally {
    fn add(&mut self, g: &GroupBatch) {
        for (r, rw) in g.rollouts.iter().zip(&g.rewards) {
            self.rollouts += 1;
            self.planner += rw.planner_total;
            self.reasoner += rw.reasoner_total;
            self.acc += rw.r_acc;
            self.follow += rw.r_follow;
            self.penalty += rw.r_penalty;
            self.terminal += if r.terminated_by_planner { 1.0 } else { 0.0 };
        }
    }

    fn mean(&self, x: f64) -> f64 {
        x / self.rollouts.max(1) as f64
    }
}

/// Staged joint training.
///
/// References are refreshed from the current policies at the start of every
/// epoch. Update `u` (0-based) uses `λ = lambda_stage1` while `u < stage_boundary`
/// and `lambda_stage2` afterwards. Gradients of `grad_accum` micro-batches are
/// averaged before one AdamW step per agent; an agent whose weight is exactly
/// zero is not stepped.
pub fn train(
    cfg: &RunConfig,
    planner: PolicyParams,
    reasoner: PolicyParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, MarlError> {
    cfg.validate()?;
    let vocab = Vocab::standard();
    check_compatible(&planner, &reasoner, &vocab)?;
    let workers = Workers::new(cfg.threads)?;
    let mut p = Policy::new(planner, vocab.pad);
    let mut r = Policy::new(reasoner, vocab.pad);
    let mut opt_p = OptimizerState::new(p.params(), AdamWConfig::default());
    let mut opt_r = OptimizerState::new(r.params(), AdamWConfig::default());
    let total = cfg.total_updates();
    let settings = SampleSettings {
        planner_temp: cfg.temp_train,
        reasoner_temp: cfg.temp_train,
        n_max: cfg.n_max,
        l_max: cfg.l_max,
        planner_source: cfg.planner_source,
        mask: None,
    };
    let eval_set = if cfg.eval_every > 0 { eval_questions(&cfg.task, cfg.seed, cfg.eval_questions)? } else { Vec::new() };
    let eval_settings = EvalSettings::from_config(cfg);
    let mut last_stage = cfg.lambda_at(0).0;

    for epoch in 1..=cfg.epochs {
        let ref_p = p.clone();
        let ref_r = r.clone();
        for s in 0..cfg.steps_per_epoch {
            let u = (epoch - 1) * cfg.steps_per_epoch + s;
            let (stage, lambda) = cfg.lambda_at(u);
            last_stage = stage;
            let lr = cosine_lr(u, total, cfg.lr_max, cfg.lr_min)?;
            let weights = ObjectiveWeights { lambda, beta: cfg.beta_kl, clip_eps: cfg.clip_eps, temperature: cfg.temp_train };
            let mut gp = Grads::zeros_like(p.params());
            let mut gr = Grads::zeros_like(r.params());
            let scale = 1.0 / cfg.grad_accum as f64;
            let (mut loss, mut kl_p, mut kl_r) = (0.0, 0.0, 0.0);
            let mut tally = Tally::default();
            for micro in 0..cfg.grad_accum as u64 {
                let batch = u * cfg.grad_accum as u64 + micro;
                let questions = generate_questions_from(
                    &cfg.task,
                    stream_seed(cfg.seed, QUESTION_STREAM, batch),
                    cfg.batch_questions,
                    batch * cfg.batch_questions as u64,
                )?;
                let seed = stream_seed(cfg.seed, ROLLOUT_STREAM, 0);
                let rollouts = workers
                    .run(|| sample_groups(&questions, &p, &r, &vocab, &settings, cfg.group_size, seed))?;
                let groups = questions
                    .into_iter()
                    .zip(rollouts)
                    .map(|(q, rs)| GroupBatch::new(q, rs, &vocab, cfg.l_max))
                    .collect::<Result<Vec<_>, _>>()?;
                groups.iter().for_each(|g| tally.add(g));
                let out = joint_loss_and_grads(&groups, &p, &r, &ref_p, &ref_r, &vocab, &weights)?;
                gp.add_scaled(&out.planner_grads, scale);
                gr.add_scaled(&out.reasoner_grads, scale);
                loss += out.loss * scale;
                kl_p += out.kl_planner * scale;
                kl_r += out.kl_reasoner * scale;
            }
            if !loss.is_finite() {
                return Err(MarlError::NonFiniteLoss(u + 1));
            }
            if lambda != 0.0 {
                p.update(|params| adamw_step(params, &gp, &mut opt_p, lr))?;
            }
            if lambda != 1.0 {
                r.update(|params| adamw_step(params, &gr, &mut opt_r, lr))?;
            }
            let (mut eval_accuracy, mut strategies) = (None, None);
            if cfg.eval_every > 0 && (u + 1).is_multiple_of(cfg.eval_every) {
                let report = workers.run(|| evaluate(&p, &r, &vocab, &eval_set, &eval_settings))?;
                eval_accuracy = Some(report.accuracy);
                strategies = Some(report.mean_strategies_per_question);
            }
            let metrics = UpdateMetrics {
                update: u + 1,
                epoch,
                stage,
                lambda,
                lr,
                mean_planner_reward: tally.mean(tally.planner),
                mean_reasoner_reward: tally.mean(tally.reasoner),
                mean_r_acc: tally.mean(tally.acc),
                mean_r_follow: tally.mean(tally.follow),
                mean_r_penalty: tally.mean(tally.penalty),
                terminal_rate: tally.mean(tally.terminal),
                kl_planner: kl_p,
                kl_reasoner: kl_r,
                loss,
                eval_accuracy,
                mean_strategies_per_question: strategies,
            };
            log::debug!(
                "update {} stage {} acc {:.3} planner {:.3} reasoner {:.3}",
                metrics.update,
                stage,
                metrics.mean_r_acc,
                metrics.mean_planner_reward,
                metrics.mean_reasoner_reward
            );
            observer.on_update(&metrics)?;
        }
        observer.on_epoch_end(epoch, epoch * cfg.steps_per_epoch, last_stage, p.params(), r.params())?;
    }
    Ok(TrainOutcome { planner: p.into_params(), reasoner: r.into_params(), updates: total, last_stage })
}

