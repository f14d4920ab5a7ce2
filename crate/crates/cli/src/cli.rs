//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands;
use crate::config::{DataSource, RunConfig};
use crate::error::{exit, Result};

#[derive(Debug, Parser)]
#[command(
    name = "crackseg",
    version,
    about = "Cost-sensitive crack segmentation"
)]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed (the generator seed for `synth`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus and its manifest.
    Synth(Common),
    /// Train a model under the configured strategy.
    Train(Common),
    /// Score the test split and write metrics, curves and masks.
    Eval(Common),
    /// Tune optimizer hyperparameters for validation MPA.
    Tune(Common),
    /// Tabulate finished evaluations side by side.
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::Tune(c)
            | Command::Compare(c) => c,
        }
    }
}

/// Loads the config named by `common` and applies the overrides.
pub fn resolve(command: &Command) -> Result<(RunConfig, PathBuf)> {
    let common = command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        match (command, &mut cfg.data) {
            (Command::Synth(_), DataSource::Synthetic(s)) => s.seed = seed,
            _ => cfg.seed = seed,
        }
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_directory.clone());
    Ok((cfg, out))
}

pub fn execute(command: &Command) -> Result<String> {
    let (cfg, out) = resolve(command)?;
    let summary = match command {
        Command::Synth(_) => {
            let m = commands::cmd_synth(&cfg, &out)?;
            format!(
                "wrote {} samples to {} (crack fraction {:.4})",
                m.count,
                out.display(),
                m.mean_crack_fraction
            )
        }
        Command::Train(_) => {
            let o = commands::cmd_train(&cfg, &out)?;
            let best = &o.log[o.best_epoch - 1];
            format!(
                "trained {} epochs, kept epoch {} (val loss {:.6})",
                o.log.len(),
                o.best_epoch,
                best.val_loss
            )
        }
        Command::Eval(_) => {
            let m = commands::cmd_eval(&cfg, &out)?;
            format!(
                "{}: precision {:.4} recall {:.4} f1 {:.4} mpa {:.4}",
                m.strategy, m.crack.precision, m.crack.recall, m.crack.f1, m.crack.mpa
            )
        }
        Command::Tune(_) => {
            let r = commands::cmd_tune(&cfg, &out)?;
            format!(
                "{} evaluations, best validation mpa {:.4}",
                r.history.len(),
                r.best_objective
            )
        }
        Command::Compare(_) => {
            let rows = commands::cmd_compare(&cfg, &out)?;
            format!("compared {} evaluations", rows.len() - 1)
        }
    };
    Ok(summary)
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
        }
    };
    match execute(&parsed.command) {
        Ok(summary) => {
            println!("{summary}");
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
