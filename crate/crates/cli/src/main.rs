//! `rsim`: train, evaluate and inspect planner/reasoner policy pairs.
//!
//! Failures print one line to stderr, `error: <Category>: <message>`, and exit
//! with status 1. Log verbosity comes from `RSIM_LOG_LEVEL` (error, info or debug).

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "rsim", version, about = "Leader-follower strategy injection on synthetic step-wise tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options that resolve a run configuration. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task, e.g. `strategy-lock:3`, `strategy-lock:3:A` or `chain-arithmetic:3`.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total updates; must be a multiple of the configured epoch count.
    #[arg(long)]
    pub updates: Option<u64>,
    /// Updates run with the first-stage weighting.
    #[arg(long)]
    pub stage_boundary: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a fresh planner/reasoner pair.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for metrics, evaluation tables and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained pair on the held-out questions and print a JSON report.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        planner_ckpt: PathBuf,
        #[arg(long)]
        reasoner_ckpt: PathBuf,
    },
    /// Evaluate a frozen planner with another (or a freshly initialized) reasoner.
    PluginEval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        planner_ckpt: PathBuf,
        #[arg(long)]
        reasoner_ckpt: Option<PathBuf>,
        /// Forbid one strategy; the planner falls back to its next-best choice.
        #[arg(long)]
        mask_strategy: Option<String>,
    },
    /// Continue training a pair on a new task and report retention on its original task.
    Continue {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        planner_ckpt: PathBuf,
        #[arg(long)]
        reasoner_ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of freshly initialized policies.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `planner` or `reasoner`; both when omitted.
        #[arg(long)]
        role: Option<String>,
        #[arg(long, default_value_t = 1000)]
        probes: usize,
    },
    /// Count strategy keywords per step in text files and print a CSV table.
    Count {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print a checkpoint's metadata as JSON.
    Inspect { path: PathBuf },
    /// Convert a metrics.jsonl stream into a CSV curve table.
    Summarize {
        path: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print generated questions as JSON Lines.
    ExportQuestions {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("RSIM_LOG_LEVEL").unwrap_or_else(|_| "info".to_string());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        return Err(CliError::config(format!("RSIM_LOG_LEVEL must be error, info or debug, got {level:?}")));
    }
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging()?;
    match cli.command {
        Command::Train { cfg, out } => commands::train(&cfg, &out),
        Command::Eval { cfg, planner_ckpt, reasoner_ckpt } => commands::eval(&cfg, &planner_ckpt, &reasoner_ckpt),
        Command::PluginEval { cfg, planner_ckpt, reasoner_ckpt, mask_strategy } => {
            commands::plugin_eval(&cfg, &planner_ckpt, reasoner_ckpt.as_deref(), mask_strategy.as_deref())
        }
        Command::Continue { cfg, planner_ckpt, reasoner_ckpt, out } => {
            commands::continue_training(&cfg, &planner_ckpt, &reasoner_ckpt, &out)
        }
        Command::Gradcheck { cfg, role, probes } => commands::gradcheck(&cfg, role.as_deref(), probes),
        Command::Count { paths } => commands::count(&paths),
        Command::Inspect { path } => commands::inspect(&path),
        Command::Summarize { path, out } => commands::summarize(&path, out.as_deref()),
        Command::ExportQuestions { cfg, count } => commands::export_questions(&cfg, count),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
