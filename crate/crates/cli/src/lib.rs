//! The `propspan` command line: train, predict, score, ensemble,
//! make-synthetic and presets. Exit codes are 0 on success, 1 when inputs
//! fail validation (nothing has been written) and 2 when a run fails.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Errors from the core library raised while checking inputs.
pub(crate) fn invalid(e: propspan::Error) -> CliError {
    CliError::invalid(e.to_string())
}

/// Errors from the core library raised after work has started.
pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Si,
    Tc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecisionArg {
    Multilabel,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Rows,
}

#[derive(Debug, Parser)]
#[command(name = "propspan", version, about = "Propaganda span identification and technique classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a run configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Predict spans (SI) or techniques for given spans (TC) with a trained model.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        /// Expected task; an error if the checkpoint holds the other one.
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        /// Span rows to classify (TC only); techniques, if present, are ignored.
        #[arg(long)]
        spans: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Also write per-class probabilities (TC only).
        #[arg(long)]
        probabilities: Option<PathBuf>,
    },
    /// Score a prediction file against gold annotations.
    Score {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Average TC probability files and write technique rows.
    Ensemble {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Technique names, one per line; the 14 shared-task names when absent.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "multilabel")]
        decision: DecisionArg,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a deterministic toy corpus with planted trigger phrases.
    MakeSynthetic {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        articles: usize,
        #[arg(long, default_value_t = 5)]
        sentences: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
    },
    /// List presets, or print the settings of one.
    Presets { name: Option<String> },
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config } => commands::train(&config, &config::process_env),
        Command::Predict {
            checkpoint,
            articles,
            task,
            spans,
            output,
            probabilities,
        } => commands::predict(&commands::PredictArgs {
            checkpoint,
            articles,
            task,
            spans,
            output,
            probabilities,
        }),
        Command::Score { task, gold, pred, format } => commands::score(task, &gold, &pred, format),
        Command::Ensemble {
            files,
            labels,
            decision,
            threshold,
            output,
        } => commands::ensemble(&files, labels.as_deref(), decision, threshold, &output),
        Command::MakeSynthetic {
            output,
            seed,
            articles,
            sentences,
            classes,
        } => commands::make_synthetic(&output, seed, articles, sentences, classes),
        Command::Presets { name } => commands::presets(name.as_deref()),
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
