//! `earsep`: synthesize scenes, train the separator, evaluate and report.

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Console, TrainArgs};
use error::CliResult;

/// Default output root when `--out` is not given; each subcommand writes to
/// its own sub-directory.
const OUT_ENV: &str = "EARSEP_OUT";

#[derive(Debug, Parser)]
#[command(name = "earsep", version, about = "Binaural two-talker separation pipeline")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory [default: $EARSEP_OUT/<command>, else ./earsep-out/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace output left by an earlier run.
    #[arg(long)]
    overwrite: bool,
}

impl OutArgs {
    fn resolve(&self, command: &str) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        let root = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("earsep-out"));
        root.join(command)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render train/val/test scenes and write their manifests.
    Synth {
        /// TOML file with `[corpus]` and `[dataset]` sections.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train until early stop, writing checkpoints and a JSONL epoch log.
    Train {
        /// TOML file with `[model]`, `[train]` and `[stft]` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training manifest (`train.jsonl` from `synth`).
        #[arg(long)]
        manifest: PathBuf,
        /// Validation manifest [default: `val.jsonl` next to the training manifest].
        #[arg(long)]
        val: Option<PathBuf>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the training seed (initialization, shuffling, dropout).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a manifest; without a checkpoint only the unprocessed baseline is reported.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Plot and tabulate a report written by `eval`.
    Report {
        report: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let console = Console { quiet: cli.quiet };
    match cli.command {
        Command::Synth { config, seed, out } => {
            commands::synth(Some(&config), seed, &out.resolve("synth"), out.overwrite, &console).map(drop)
        }
        Command::Train {
            config,
            manifest,
            val,
            checkpoint,
            seed,
            out,
        } => commands::train(
            TrainArgs {
                config: config.as_deref(),
                manifest: &manifest,
                val: val.as_deref(),
                checkpoint: checkpoint.as_deref(),
                seed,
                out: &out.resolve("train"),
                overwrite: out.overwrite,
            },
            &console,
        )
        .map(drop),
        Command::Eval { manifest, checkpoint, out } => commands::eval(
            &manifest,
            checkpoint.as_deref(),
            &out.resolve("eval"),
            out.overwrite,
            &console,
        )
        .map(drop),
        Command::Report { report, out } => {
            commands::report(Path::new(&report), &out.resolve("report"), out.overwrite, &console).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
