//! `clipsam` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clipsam", version, about = "Zero-shot anomaly segmentation at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the interaction module on the generated train split.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Segment one grayscale PGM image.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Skip mask refinement.
        #[arg(long)]
        no_mmr: bool,
        /// Use plain token/text similarity instead of the trained module.
        #[arg(long)]
        no_umci: bool,
        /// Output directory (default: `infer/` next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a generated held-out split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset seed; the split is the test split a run with this seed would hold out.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        /// Output directory (default: the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write held-out images and masks as PGM files.
    Generate {
        /// Dataset seed, as for `eval`.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        extent: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score every ablation variant.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => commands::train(&config),
        Command::Infer { ckpt, image, no_mmr, no_umci, out } => {
            commands::infer(&ckpt, &image, no_mmr, no_umci, out.as_deref())
        }
        Command::Eval { ckpt, seed, count, out } => commands::eval(&ckpt, seed, count, out.as_deref()),
        Command::Generate { seed, count, extent, out } => commands::generate(seed, count, extent, &out),
        Command::Ablate { config } => commands::ablate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
