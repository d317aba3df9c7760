use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rsim::analysis::{count_strategies_text, counts_csv, summarize_metrics_file};
use rsim::checkpoint::Checkpoint;
use rsim::env::{generate_questions, write_questions_jsonl, TaskSpec};
use rsim::marl::{self, eval_questions, init_policies, EvalSettings};
use rsim::model::{gradcheck as check_gradients, Policy, PolicyRole, PolicySpec};
use rsim::{RunConfig, Strategy, Vocab};

use crate::error::{Category, CliError};
use crate::output::{write_json, RunFiles};
use crate::ConfigArgs;

/// Largest accepted relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

/// The config file if given, else `base`, else defaults; then flag overrides.
fn resolve_config(args: &ConfigArgs, base: Option<RunConfig>) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_json(&read_text(path)?)?,
        None => base.unwrap_or_default(),
    };
    if let Some(task) = &args.task {
        cfg.task = task.parse::<TaskSpec>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.stage_boundary {
        cfg.stage_boundary = n;
    }
    if let Some(updates) = args.updates {
        if updates == 0 || cfg.epochs == 0 || updates % cfg.epochs != 0 {
            return Err(CliError::config(format!("--updates {updates} is not a positive multiple of epochs = {}", cfg.epochs)));
        }
        cfg.steps_per_epoch = updates / cfg.epochs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_role(path: &Path, role: PolicyRole) -> Result<Checkpoint, CliError> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.meta.role != role {
        return Err(CliError::config(format!("{}: expected a {role} checkpoint, found {}", path.display(), ckpt.meta.role)));
    }
    Ok(ckpt)
}

pub fn train(args: &ConfigArgs, out: &Path) -> Result<(), CliError> {
    let cfg = resolve_config(args, None)?;
    log::info!("training on {} for {} updates, writing to {}", cfg.task, cfg.total_updates(), out.display());
    let mut files = RunFiles::create(out, &cfg)?;
    let (planner, reasoner) = init_policies(&cfg);
    let outcome = marl::train(&cfg, planner, reasoner, &mut files)?;
    files.finish(&outcome)?;
    log::info!("finished after {} updates", outcome.updates);
    Ok(())
}

pub fn eval(args: &ConfigArgs, planner: &Path, reasoner: &Path) -> Result<(), CliError> {
    let p = load_role(planner, PolicyRole::Planner)?;
    let r = load_role(reasoner, PolicyRole::Reasoner)?;
    let cfg = resolve_config(args, p.meta.config.clone())?;
    let vocab = Vocab::standard();
    let questions = eval_questions(&cfg.task, cfg.seed, cfg.eval_questions)?;
    let report = marl::evaluate(
        &Policy::new(p.params, vocab.pad),
        &Policy::new(r.params, vocab.pad),
        &vocab,
        &questions,
        &EvalSettings::from_config(&cfg),
    )?;
    print_json(&report);
    Ok(())
}

pub fn plugin_eval(args: &ConfigArgs, planner: &Path, reasoner: Option<&Path>, mask: Option<&str>) -> Result<(), CliError> {
    let p = load_role(planner, PolicyRole::Planner)?;
    let r = reasoner.map(|path| load_role(path, PolicyRole::Reasoner)).transpose()?;
    let mask = mask
        .map(|m| m.parse::<Strategy>().map_err(|_| CliError::config(format!("unknown strategy {m:?}"))))
        .transpose()?;
    let cfg = resolve_config(args, p.meta.config.clone())?;
    let report = marl::plugin_eval(&p.params, r.as_ref().map(|c| &c.params), &cfg.task, &cfg, mask)?;
    print_json(&report);
    Ok(())
}

pub fn continue_training(args: &ConfigArgs, planner: &Path, reasoner: &Path, out: &Path) -> Result<(), CliError> {
    let p = load_role(planner, PolicyRole::Planner)?;
    let r = load_role(reasoner, PolicyRole::Reasoner)?;
    let snapshot = p.meta.config.clone();
    let original = snapshot
        .as_ref()
        .map(|c| c.task.clone())
        .ok_or_else(|| CliError::config(format!("{}: checkpoint has no config snapshot", planner.display())))?;
    let cfg = resolve_config(args, snapshot)?;
    log::info!("continuing from {original} on {} for {} updates", cfg.task, cfg.total_updates());
    let mut files = RunFiles::create(out, &cfg)?;
    let (outcome, report) = marl::continue_train(p.params, r.params, &original, &cfg, &mut files)?;
    files.finish(&outcome)?;
    write_json(&out.join("continue_report.json"), &report)?;
    print_json(&report);
    Ok(())
}

#[derive(Serialize)]
struct GradcheckLine {
    role: PolicyRole,
    #[serde(flatten)]
    report: rsim::model::GradcheckReport,
}

pub fn gradcheck(args: &ConfigArgs, role: Option<&str>, probes: usize) -> Result<(), CliError> {
    let cfg = resolve_config(args, None)?;
    let roles = match role {
        None => vec![PolicyRole::Planner, PolicyRole::Reasoner],
        Some("planner") => vec![PolicyRole::Planner],
        Some("reasoner") => vec![PolicyRole::Reasoner],
        Some(other) => return Err(CliError::config(format!("unknown role {other:?}"))),
    };
    let vocab = Vocab::standard();
    let mut worst: f64 = 0.0;
    for (i, role) in roles.into_iter().enumerate() {
        let shape = match role {
            PolicyRole::Planner => &cfg.planner,
            PolicyRole::Reasoner => &cfg.reasoner,
        };
        let report = check_gradients(&PolicySpec::for_role(role, shape, vocab.len()), cfg.seed + i as u64, probes);
        worst = worst.max(report.max_rel_error);
        println!("{}", serde_json::to_string(&GradcheckLine { role, report }).expect("report serializes"));
    }
    if worst.is_nan() || worst >= GRADCHECK_TOLERANCE {
        return Err(CliError::new(
            Category::NumericError,
            format!("max relative gradient error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"),
        ));
    }
    Ok(())
}

pub fn count(paths: &[PathBuf]) -> Result<(), CliError> {
    let counts = paths.iter().map(|p| read_text(p).map(|t| count_strategies_text(&t))).collect::<Result<Vec<_>, _>>()?;
    print!("{}", counts_csv(&counts));
    Ok(())
}

#[derive(Serialize)]
struct TensorInfo<'a> {
    name: &'a str,
    dims: &'a [usize],
}

#[derive(Serialize)]
struct InspectReport<'a> {
    role: PolicyRole,
    spec: &'a PolicySpec,
    tensors: Vec<TensorInfo<'a>>,
    parameters: usize,
    update_count: u64,
    stage: u8,
    vocab_size: usize,
    vocab_hash: &'a str,
    strategy_table_hash: &'a str,
    task: Option<String>,
}

pub fn inspect(path: &Path) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(path)?;
    let m = &ckpt.meta;
    print_json(&InspectReport {
        role: m.role,
        spec: &m.spec,
        tensors: ckpt.params.tensors.iter().map(|t| TensorInfo { name: &t.name, dims: &t.dims }).collect(),
        parameters: ckpt.params.num_scalars(),
        update_count: m.update_count,
        stage: m.stage,
        vocab_size: m.vocab.len(),
        vocab_hash: &m.vocab_hash,
        strategy_table_hash: &m.strategy_table_hash,
        task: m.config.as_ref().map(|c| c.task.to_string()),
    });
    Ok(())
}

pub fn summarize(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let table = summarize_metrics_file(path)?;
    match out {
        Some(dest) => std::fs::write(dest, table).map_err(|e| CliError::io(dest.display(), e)),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

pub fn export_questions(args: &ConfigArgs, count: usize) -> Result<(), CliError> {
    let cfg = resolve_config(args, None)?;
    let questions = generate_questions(&cfg.task, cfg.seed, count)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_questions_jsonl(&questions, &Vocab::standard(), &mut lock).map_err(|e| CliError::io("stdout", e))?;
    lock.flush().map_err(|e| CliError::io("stdout", e))
}
