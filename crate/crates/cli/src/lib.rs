//! Command-line front end: `score`, `train`, `predict`, `explain`, `evaluate`.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use scbm::pipeline::train::ModelKind;
use scbm::scorer::PersonaMode;
use scbm::Task;

pub use commands::{cmd_evaluate, cmd_explain, cmd_predict, cmd_score, cmd_train};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "scbm", version, about = "Adjective concept bottleneck classifiers for sexism detection")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `none` or `per_annotator`.
    #[arg(long, global = true, value_parser = parse_persona_mode)]
    pub persona_mode: Option<PersonaMode>,
    /// `1.1`, `1.2` or `1.3`.
    #[arg(long, global = true, value_parser = parse_task)]
    pub task: Option<Task>,
    /// `scbm` or `scbmt`.
    #[arg(long, global = true, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score the dataset against the lexicon and export concept vectors.
    Score,
    /// Train a head; writes the checkpoint and run manifest.
    Train,
    /// Export hard and soft predictions for a split.
    Predict {
        #[arg(long)]
        split: Option<String>,
    },
    /// Write local (and with --global, per-class) explanation reports.
    Explain {
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        global: bool,
    },
    /// Compute macro-F1 and cross-entropy for a split (dev by default).
    Evaluate {
        #[arg(long)]
        split: Option<String>,
    },
}

fn parse_persona_mode(s: &str) -> Result<PersonaMode, String> {
    PersonaMode::parse(s).map_err(|e| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::parse(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).map_err(|e| e.to_string())
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            task: self.task,
            model: self.model,
            persona_mode: self.persona_mode,
        }
    }
}

/// Runs one invocation and returns the line to print.
pub fn run(cli: &Cli) -> CliResult<String> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    config.apply(&cli.overrides());
    match &cli.command {
        Command::Score => Ok(cmd_score(&config)?.line()),
        Command::Train => {
            let m = cmd_train(&config)?;
            Ok(format!(
                "trained {} for task {}: best dev macro-F1 {:.4} at epoch {} ({} epochs run); checkpoint {} sha256 {}",
                m.train_config.model.as_str(),
                m.task,
                m.best_dev_macro_f1,
                m.best_epoch,
                m.history.epochs.len(),
                m.checkpoint_file.display(),
                m.checkpoint_sha256
            ))
        }
        Command::Predict { split } => {
            let s = cmd_predict(&config, split.as_deref())?;
            Ok(format!(
                "predicted {} {} instances: {} and {}",
                s.instances,
                s.split,
                s.hard_file.display(),
                s.soft_file.display()
            ))
        }
        Command::Explain { split, global } => {
            let s = cmd_explain(&config, split.as_deref(), *global)?;
            let mut line = format!("{} local rows in {}", s.local_rows, s.local_file.display());
            if let Some(g) = &s.global_file {
                line += &format!("; {} global rows in {}", s.global_rows, g.display());
            }
            if !s.omitted.is_empty() {
                line += &format!("; no correct training instances for {}", s.omitted.join(", "));
            }
            Ok(line)
        }
        Command::Evaluate { split } => {
            let m = cmd_evaluate(&config, split.as_deref())?;
            Ok(format!(
                "task {} {} (n = {}): macro-F1 {:.4}, cross-entropy {:.4}",
                m.task, m.split, m.n, m.macro_f1, m.cross_entropy
            ))
        }
    }
}
