//! `mbnn`: train, evaluate, gradient-check and benchmark margin-trained networks.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 runtime or numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CliConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }

    /// Library errors raised while checking inputs are usage errors, except
    /// numeric failures.
    pub fn usage_from(e: mbnn::Error) -> Self {
        match e {
            mbnn::Error::Numeric(_) => CliError::runtime(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mbnn", version, about = "Margin-based feed-forward network classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network on a dataset and save it.
    Train {
        #[command(flatten)]
        common: Common,
        /// Per-epoch log CSV (default: `<out>.log.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Use full-batch gradient steps instead of shuffled per-sample steps.
        #[arg(long)]
        full_batch: bool,
    },
    /// Report accuracy of a saved model on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random instances.
        #[arg(long)]
        instances: Option<usize>,
        /// Perturb the exact gradient before comparing (exercises the failure path).
        #[arg(long, hide = true)]
        corrupt_exact: bool,
    },
    /// Repeated trials over training fractions and algorithms.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Write 0 in the wall-time column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Accuracy against hidden width at one training fraction.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Hidden widths, strictly ascending.
        #[arg(long, value_name = "N[,N...]")]
        hidden: Option<String>,
        #[arg(long)]
        no_timing: bool,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// The dataset's first line is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, value_name = "last|INDEX")]
    label_col: Option<String>,
    /// Hidden layer widths; the count sets the depth.
    #[arg(long, value_name = "M_H[,M_H...]")]
    shape: Option<String>,
    #[arg(long, value_name = "F")]
    lambda: Option<f64>,
    #[arg(long, value_name = "F")]
    alpha: Option<f64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    repeats: Option<usize>,
    #[arg(long, value_name = "F[,F...]")]
    fraction: Option<String>,
    #[arg(long, value_name = "margin|ann[,...]")]
    algorithm: Option<String>,
    #[arg(long, value_name = "exact|paper")]
    grad_mode: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// `key = value` settings file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Map ISOLET letter labels 1..26 to vowel/consonant.
    #[arg(long)]
    isolet_binary: bool,
}

fn on(b: bool) -> Option<String> {
    b.then(|| "true".to_string())
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl Common {
    fn merged(&self, extra: Vec<(&'static str, Option<String>)>) -> Result<CliConfig, CliError> {
        let mut flags = vec![
            ("data", path(&self.data)),
            ("header", on(self.header)),
            ("label-col", self.label_col.clone()),
            ("shape", self.shape.clone()),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("fraction", self.fraction.clone()),
            ("algorithm", self.algorithm.clone()),
            ("grad-mode", self.grad_mode.clone()),
            ("out", path(&self.out)),
            ("jobs", self.jobs.map(|v| v.to_string())),
            ("isolet-binary", on(self.isolet_binary)),
        ];
        flags.extend(extra);
        CliConfig::merge(self.config.as_deref(), flags)
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Train { common, log, full_batch } => {
            let c = common.merged(vec![("log", path(&log)), ("full-batch", on(full_batch))])?;
            commands::train(&c)
        }
        Command::Eval { common, model } => {
            let c = common.merged(vec![("model", path(&model))])?;
            commands::eval(&c)
        }
        Command::Gradcheck { common, instances, corrupt_exact } => {
            let c = common.merged(vec![("instances", instances.map(|v| v.to_string()))])?;
            commands::gradcheck(&c, corrupt_exact)
        }
        Command::Benchmark { common, no_timing } => {
            let c = common.merged(vec![("no-timing", on(no_timing))])?;
            commands::benchmark(&c)
        }
        Command::Sweep { common, hidden, no_timing } => {
            let c = common.merged(vec![("hidden", hidden), ("no-timing", on(no_timing))])?;
            commands::sweep(&c)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
