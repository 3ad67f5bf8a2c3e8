//! Benchmark CLI: train kernel-matching models, sweep approximation
//! baselines, and analyze trained checkpoints — all from one JSON config.
//!
//! Runs are deterministic: the same config file and flags produce
//! byte-identical outputs (wall-clock columns aside), in a directory named
//! by a hash of the config.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksm::error::{KsmError, Result};

use crate::config::Config;
use crate::output::RunContext;

#[derive(Parser)]
#[command(name = "ksm-cli", version, about = "Kernel similarity matching benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output root (default: $KSM_OUT, falling back to ./out).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Overrides the config's run seed: the training seed for train and
    /// compare, the cluster/classify seeds for analyze.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for parallel sweeps (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoints, landmarks, and the training log.
    Train(CommonArgs),
    /// Sweep approximation methods over output dimensions and seeds.
    Compare(CommonArgs),
    /// Run analysis tasks against a trained checkpoint.
    Analyze(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Train(a) | Command::Compare(a) | Command::Analyze(a) => a,
        }
    }
}

/// `--seed` replaces the seeds that drive the command's own randomness; the
/// dataset seed stays config-owned because it defines the data, not the run.
fn apply_seed_override(config: &mut Config, seed: Option<u64>) {
    let Some(seed) = seed else { return };
    if let Some(training) = &mut config.training {
        training.seed = seed;
    }
    if let Some(analyze) = &mut config.analyze {
        if let Some(cluster) = &mut analyze.cluster {
            cluster.seed = seed;
        }
        if let Some(classify) = &mut analyze.classify {
            classify.split_seed = seed;
        }
    }
}

fn effective_seed(config: &Config, seed_override: Option<u64>) -> u64 {
    seed_override.unwrap_or_else(|| config.training.as_ref().map_or(0, |t| t.seed))
}

fn run(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(|e| {
                KsmError::InvalidArgument(format!("failed to size the thread pool: {e}"))
            })?;
    }

    let bytes = fs::read(&args.config)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        KsmError::InvalidArgument(format!(
            "config {} is not UTF-8: {e}",
            args.config.display()
        ))
    })?;
    let mut config = Config::parse(text)?;
    apply_seed_override(&mut config, args.seed);

    let hash = output::config_hash(&bytes, args.seed);
    let seed = effective_seed(&config, args.seed);
    let root = output::resolve_out_root(args.out.clone());
    let ctx = RunContext::create(&root, hash, seed)?;
    println!("run {} (seed {}) -> {}", ctx.config_hash, ctx.seed, ctx.dir.display());

    match &cli.command {
        Command::Train(_) => commands::cmd_train(&config, &ctx),
        Command::Compare(_) => commands::cmd_compare(&config, &ctx),
        Command::Analyze(_) => commands::cmd_analyze(&config, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
