//! `echoview`: prepare meshes, generate view samples, train, evaluate and verify.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use echoview_core::dataset::Split;
use echoview_core::Error;

use commands::Layout;
use config::RunConfig;

/// Overrides the output root from the config file; `--out` still wins.
const OUT_ENV: &str = "ECHOVIEW_OUT";
const DEFAULT_OUT: &str = "echoview-out";

#[derive(Parser, Debug)]
#[command(name = "echoview", version, about = "Echocardiography view sample generation and mesh regression")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Image side length in pixels.
    #[arg(long, global = true)]
    image_size: Option<usize>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the template and corresponded meshes.
    Prepare,
    /// Slice the prepared meshes into a labelled dataset.
    Generate,
    /// Train the network on the dataset's train split.
    Train,
    /// Evaluate a checkpoint (or the ground truth) on one split.
    Eval {
        /// Score ground-truth coordinates instead of model predictions.
        #[arg(long)]
        gt_as_prediction: bool,
        /// Split to evaluate: train, val or test.
        #[arg(long)]
        split: Option<Split>,
    },
    /// Run the slicing, gradient and view-recovery oracle suites.
    Verify,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(n) = cli.image_size {
        config.image_size = n;
    }
    if let Command::Eval { gt_as_prediction, split } = &cli.command {
        config.eval.gt_as_prediction |= gt_as_prediction;
        if let Some(s) = split {
            config.eval.split = *s;
        }
    }
    config.validate()?;
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let layout = Layout { root };
    echoview_core::parallel::with_workers(config.workers, || match cli.command {
        Command::Prepare => commands::prepare(&config, &layout).map(|_| true),
        Command::Generate => commands::generate(&config, &layout).map(|_| true),
        Command::Train => commands::train_cmd(&config, &layout).map(|_| true),
        Command::Eval { .. } => commands::eval(&config, &layout).map(|_| true),
        Command::Verify => commands::verify(&config),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
