//! Files written by a training run.
//!
//! ```text
//! config.json          resolved configuration
//! metrics.jsonl        one record per update
//! curves.csv           metrics.jsonl as a CSV table
//! eval.csv             one held-out evaluation row per epoch checkpoint
//! planner_epochN.ckpt  reasoner_epochN.ckpt
//! planner.ckpt         reasoner.ckpt (final)
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rsim::analysis::summarize_metrics_file;
use rsim::checkpoint::Checkpoint;
use rsim::marl::{eval_questions, evaluate, EvalReport, EvalSettings, MarlError, TrainObserver, TrainOutcome, UpdateMetrics};
use rsim::model::{Policy, PolicyParams, PolicyRole};
use rsim::{Question, RunConfig, Vocab};

use crate::error::CliError;

#[derive(Serialize)]
struct EvalRow {
    epoch: u64,
    update: u64,
    stage: u8,
    accuracy: f64,
    plan_accuracy: Option<f64>,
    lock_accuracy: Option<f64>,
    mean_strategies_per_question: f64,
    mean_trace_length: f64,
}

pub struct RunFiles {
    dir: PathBuf,
    cfg: RunConfig,
    vocab: Vocab,
    metrics: BufWriter<File>,
    eval_csv: csv::Writer<File>,
    eval_set: Vec<Question>,
    settings: EvalSettings,
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::io(path.display(), e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

pub fn save_checkpoint(
    path: &Path,
    role: PolicyRole,
    params: &PolicyParams,
    updates: u64,
    stage: u8,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    Checkpoint::new(role, params.clone(), updates, stage, Some(cfg.clone())).save(path)?;
    Ok(())
}

fn observer_error(e: CliError) -> MarlError {
    MarlError::Observer(e.message)
}

impl RunFiles {
    /// Creates `dir` and writes the resolved configuration.
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<RunFiles, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        write_json(&dir.join("config.json"), cfg)?;
        let eval_path = dir.join("eval.csv");
        Ok(RunFiles {
            dir: dir.to_path_buf(),
            cfg: cfg.clone(),
            vocab: Vocab::standard(),
            metrics: BufWriter::new(create(&dir.join("metrics.jsonl"))?),
            eval_csv: csv::Writer::from_writer(create(&eval_path)?),
            eval_set: eval_questions(&cfg.task, cfg.seed, cfg.eval_questions)?,
            settings: EvalSettings::from_config(cfg),
        })
    }

    /// Writes the final checkpoints and the curve table.
    pub fn finish(mut self, outcome: &TrainOutcome) -> Result<(), CliError> {
        self.metrics.flush().map_err(|e| CliError::io("metrics.jsonl", e))?;
        self.eval_csv.flush().map_err(|e| CliError::io("eval.csv", e))?;
        let (u, stage) = (outcome.updates, outcome.last_stage);
        save_checkpoint(&self.dir.join("planner.ckpt"), PolicyRole::Planner, &outcome.planner, u, stage, &self.cfg)?;
        save_checkpoint(&self.dir.join("reasoner.ckpt"), PolicyRole::Reasoner, &outcome.reasoner, u, stage, &self.cfg)?;
        let curves = summarize_metrics_file(&self.dir.join("metrics.jsonl"))?;
        let path = self.dir.join("curves.csv");
        std::fs::write(&path, curves).map_err(|e| CliError::io(path.display(), e))
    }

    fn evaluate(&self, planner: &PolicyParams, reasoner: &PolicyParams) -> Result<EvalReport, MarlError> {
        let p = Policy::new(planner.clone(), self.vocab.pad);
        let r = Policy::new(reasoner.clone(), self.vocab.pad);
        evaluate(&p, &r, &self.vocab, &self.eval_set, &self.settings)
    }
}

impl TrainObserver for RunFiles {
    fn on_update(&mut self, m: &UpdateMetrics) -> Result<(), MarlError> {
        writeln!(self.metrics, "{}", m.to_json_line())
            .map_err(|e| observer_error(CliError::io("metrics.jsonl", e)))?;
        log::debug!(
            "update {} stage {} planner {:.3} reasoner {:.3} acc {:.3} loss {:.4}",
            m.update,
            m.stage,
            m.mean_planner_reward,
            m.mean_reasoner_reward,
            m.mean_r_acc,
            m.loss
        );
        if let Some(acc) = m.eval_accuracy {
            log::info!("update {} eval accuracy {acc:.3}", m.update);
        }
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        epoch: u64,
        update: u64,
        stage: u8,
        planner: &PolicyParams,
        reasoner: &PolicyParams,
    ) -> Result<(), MarlError> {
        for (role, params) in [(PolicyRole::Planner, planner), (PolicyRole::Reasoner, reasoner)] {
            let path = self.dir.join(format!("{role}_epoch{epoch}.ckpt"));
            save_checkpoint(&path, role, params, update, stage, &self.cfg).map_err(observer_error)?;
        }
        let report = self.evaluate(planner, reasoner)?;
        log::info!("epoch {epoch} (update {update}) held-out accuracy {:.3}", report.accuracy);
        let row = EvalRow {
            epoch,
            update,
            stage,
            accuracy: report.accuracy,
            plan_accuracy: report.plan_accuracy,
            lock_accuracy: report.lock_accuracy,
            mean_strategies_per_question: report.mean_strategies_per_question,
            mean_trace_length: report.mean_trace_length,
        };
        self.eval_csv
            .serialize(row)
            .and_then(|_| self.eval_csv.flush().map_err(csv::Error::from))
            .map_err(|e| observer_error(CliError::io("eval.csv", e)))
    }
}
