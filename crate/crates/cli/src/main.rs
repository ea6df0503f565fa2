//! `hgsep`: train, apply and score stacked hourglass separation networks.

mod config;
mod evaluate;
mod inspect;
mod separate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, UsageError};

#[derive(Parser, Debug)]
#[command(name = "hgsep", version, about = "Stacked hourglass spectrogram-mask source separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network on a corpus's training split.
    Train {
        /// Flat TOML file whose keys are the long flag names below.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from this checkpoint (its network and STFT settings win).
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Separate a WAV file into one WAV per source.
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Mixture to separate (stereo input is averaged to mono).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write log-magnitude PNGs of the mixture and every estimate.
        #[arg(long)]
        dump_spectrograms: bool,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Separate every track of a corpus's test split and score it.
    Evaluate {
        /// Network to evaluate (omit with --oracle).
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Use ideal ratio masks from the known sources instead of a network.
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the settings and contents of a checkpoint.
    InspectCheckpoint {
        path: PathBuf,
        /// List every tensor with its shape and value range.
        #[arg(long)]
        tensors: bool,
    },
}

fn set_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| config::usage(format!("cannot configure {threads} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            resume,
            overrides,
        } => {
            let cfg = config::RunConfig::resolve(config.as_deref(), &overrides)?;
            set_threads(cfg.threads)?;
            train::run(&cfg, resume.as_deref())
        }
        Command::Separate {
            checkpoint,
            input,
            out_dir,
            dump_spectrograms,
            threads,
        } => {
            set_threads(threads)?;
            separate::run(&checkpoint, &input, &out_dir, dump_spectrograms)
        }
        Command::Evaluate {
            checkpoint,
            oracle,
            config,
            overrides,
        } => {
            let cfg = config::RunConfig::resolve(config.as_deref(), &overrides)?;
            set_threads(cfg.threads)?;
            evaluate::run(&cfg, if oracle { None } else { checkpoint.as_deref() })
        }
        Command::InspectCheckpoint { path, tensors } => inspect::run(&path, tensors),
    }
}

/// 1: usage, 3: numeric failure, 2: anything wrong with the data.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 1;
    }
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<hgsep_core::Error>())
        .any(hgsep_core::Error::is_numeric);
    if numeric {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
