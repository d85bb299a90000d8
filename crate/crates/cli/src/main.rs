//! `kinescore` — train, score, and explain movement-quality models from the
//! command line.
//!
//! All behavior is governed by flags and the optional JSON config file; the
//! process consumes no environment variables (log verbosity is the
//! `--verbose` flag, not `RUST_LOG`). Exit codes are a stable contract:
//! 0 success, 2 bad input, 3 bad checkpoint, 4 numeric failure.

mod checkpoint;
mod commands;
mod config;
mod failure;
mod files;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ExplainArgs, SynthArgs};
use crate::config::RunConfig;
use crate::failure::Result;

#[derive(Parser)]
#[command(
    name = "kinescore",
    version,
    about = "Movement-quality scoring from 3-D skeleton sequences",
    after_help = "Exit codes: 0 ok, 2 bad input, 3 bad checkpoint, 4 numeric failure.\n\
                  No environment variables are consumed."
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides both the parameter-draw and batch-shuffle seeds.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Directory the command writes its files into.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Log per-epoch progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model; writes checkpoint.json, history.csv, config.resolved.json.
    Train,
    /// Score one split with a checkpoint; writes metrics.csv.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// One of train, val, test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Export attention feedback for one sequence; writes attention.json,
    /// skeleton.svg, heatmap.svg.
    Explain {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Positions file of the sequence to explain.
        #[arg(long, value_name = "PATH")]
        positions: PathBuf,
        /// Angles file of the sequence to explain.
        #[arg(long, value_name = "PATH")]
        angles: PathBuf,
        /// Positions file of a reference performance to compare against.
        #[arg(long, value_name = "PATH", requires = "reference_angles")]
        reference_positions: Option<PathBuf>,
        /// Angles file of the reference performance.
        #[arg(long, value_name = "PATH", requires = "reference_positions")]
        reference_angles: Option<PathBuf>,
        /// Also export the angular attention maps.
        #[arg(long)]
        include_angular: bool,
    },
    /// Generate a graded synthetic dataset with known scores.
    Synth {
        /// Number of sequences.
        #[arg(long, default_value_t = 24)]
        count: usize,
        /// Frames per sequence.
        #[arg(long, default_value_t = 50)]
        frames: usize,
        /// Joints per frame.
        #[arg(long, default_value_t = 22)]
        joints: usize,
        /// Noise level of the worst sequence; the rest grade down to zero.
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        /// Number of distinct expert movements.
        #[arg(long, default_value_t = 2)]
        exercises: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_seed(cli.seed);
    match cli.command {
        Command::Train => commands::cmd_train(&cfg, &cli.out),
        Command::Eval { checkpoint, split } => {
            commands::cmd_eval(&cfg, &cli.out, &checkpoint, &split)
        }
        Command::Explain {
            checkpoint,
            positions,
            angles,
            reference_positions,
            reference_angles,
            include_angular,
        } => commands::cmd_explain(
            &cfg,
            &cli.out,
            &ExplainArgs {
                checkpoint: &checkpoint,
                positions: &positions,
                angles: &angles,
                reference_positions: reference_positions.as_deref(),
                reference_angles: reference_angles.as_deref(),
                include_angular,
            },
        ),
        Command::Synth { count, frames, joints, noise, exercises } => commands::cmd_synth(
            &cli.out,
            &SynthArgs {
                count,
                frames,
                joints,
                noise,
                exercises,
                seed: cli.seed.unwrap_or(0),
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
