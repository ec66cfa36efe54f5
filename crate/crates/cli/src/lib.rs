//! `radalt` command-line front end.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use radalt_eval::Mitigation;
use radalt_tcn::Variant;

use crate::commands::Scenario;
use crate::config::{usage, RunConfig, UsageError};

#[derive(Debug, Parser)]
#[command(name = "radalt", version, about = "FMCW radar altimeter interference toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file layered over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overwrites every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for generation and evaluation.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Configuration override, e.g. `--set train.lr=5e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labeled dataset.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        len: Option<usize>,
    },
    /// Train the denoising autoencoder.
    Train {
        /// Dataset directory from `generate`; synthesized in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Total epochs, counting any already in a resumed checkpoint.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a mitigation sweep or a landing scenario.
    Evaluate {
        #[arg(long, value_delimiter = ',', value_parser = parse_mitigation)]
        mitigations: Option<Vec<Mitigation>>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sweep")]
        scenario: Scenario,
    },
    /// Denoise a raw interleaved cf32 IQ file.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Locate chirps by cross-correlation instead of assuming back-to-back frames.
        #[arg(long)]
        segment: bool,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: radalt_tcn::TcnError| e.to_string())
}

fn parse_mitigation(s: &str) -> Result<Mitigation, String> {
    s.parse().map_err(|e: radalt_eval::EvalError| e.to_string())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    if let Some(w) = c.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let mut cfg = RunConfig::load(c.config.as_deref(), &c.overrides)?;
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    let out = &c.out;
    match cli.command {
        Command::Generate { n, val, len } => commands::generate(cfg, out, &commands::GenerateArgs { n, val, len }),
        Command::Train { data, variant, epochs, resume } => {
            commands::train(cfg, out, &commands::TrainArgs { data, variant, epochs, resume })
        }
        Command::Evaluate { mitigations, checkpoint, scenario } => {
            commands::evaluate(cfg, out, &commands::EvaluateArgs { mitigations, checkpoint, scenario })
        }
        Command::Denoise { input, output, checkpoint, segment } => {
            commands::denoise_cmd(cfg, out, &commands::DenoiseArgs { input, output, checkpoint, segment })
        }
    }
}

/// 0 on success, 2 for usage and configuration errors, 1 otherwise.
pub fn exit_code(result: &anyhow::Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => 2,
        Err(_) => 1,
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let r = run(cli);
    if let Err(e) = &r {
        eprintln!("error: {e:#}");
    }
    exit_code(&r)
}
