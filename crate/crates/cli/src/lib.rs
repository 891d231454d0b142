//! `cmhop`: generate synthetic complexes, train a consistency model, sample
//! scaffolds, fine-tune the sampler with rewards, evaluate, and benchmark.
//!
//! Every command writes into a run directory under the output root (the
//! current directory, or `$CMHOP_OUTPUT_ROOT`). Run directories hold the
//! resolved config, a provenance record with input hashes, and the command's
//! outputs. Apart from `timing.json`, outputs are byte-identical across
//! reruns with the same config and inputs.

mod commands;
mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cmhop_core::io::{FormatError, RunConfig};

pub use rundir::{output_root, RunDir, OUTPUT_ROOT_ENV};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cmhop", version, about = "Pocket-conditioned scaffold generation with consistency models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic complexes as JSON files.
    GenData(commands::data::GenDataArgs),
    /// Train a consistency model.
    Train(commands::train::TrainArgs),
    /// Generate scaffolds with metric-selected multistep sampling.
    Sample(commands::sample::SampleArgs),
    /// Fine-tune the sampler with a reward.
    Finetune(commands::finetune::FinetuneArgs),
    /// Score a sample file.
    Eval(commands::eval::EvalArgs),
    /// Time consistency sampling against a Heun ODE baseline.
    Bench(commands::bench::BenchArgs),
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory name under the runs path.
    #[arg(long)]
    pub run: Option<String>,
}

impl Common {
    pub fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
                RunConfig::from_json(&text).map_err(config_parse_error)?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Config files that fail to parse are configuration errors; unknown
/// fields are named.
fn config_parse_error(e: FormatError) -> FormatError {
    match e {
        FormatError::Json { line, column, message } => {
            let field = message
                .split_once("unknown field `")
                .and_then(|(_, rest)| rest.split_once('`'))
                .map_or_else(|| "config".to_string(), |(name, _)| name.to_string());
            FormatError::Config { field, message: format!("line {line}, column {column}: {message}") }
        }
        other => other,
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<FormatError>(), Some(FormatError::Config { .. }))
            || matches!(
                c.downcast_ref::<cmhop_core::Error>(),
                Some(cmhop_core::Error::Format(FormatError::Config { .. }))
            )
    })
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) if is_config_error(&e) => {
            eprintln!("error: invalid configuration: {e:#}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenData(a) => commands::data::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Sample(a) => commands::sample::run(a),
        Command::Finetune(a) => commands::finetune::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Bench(a) => commands::bench::run(a),
    }
}
