use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "ldmres", version, about = "Lightweight dual multiscale residual segmentation network")]
struct Cli {
    /// Overrides the seed of the run file (network init, split, shuffling, augmentation).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 runs everything on a single thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from a run file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Segment one image.
    Predict(PredictArgs),
    /// Score a model on a manifest and write a metrics CSV.
    Evaluate(EvaluateArgs),
    /// Print trainable and total parameter counts.
    Params {
        #[arg(long, conflicts_with = "model")]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print the per-layer table of a saved model.
    Summary {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// PGM or PPM image.
    #[arg(long)]
    input: PathBuf,
    /// Output mask (PGM, foreground 255).
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth mask used for the overlay and for logged metrics.
    #[arg(long, requires = "overlay")]
    gt: Option<PathBuf>,
    /// PPM error map: true positives green, false positives red, false negatives blue.
    #[arg(long, requires = "gt")]
    overlay: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Metrics CSV to write.
    #[arg(long)]
    report: PathBuf,
    /// Optional ROC points CSV.
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Name for the `dataset` column; defaults to the manifest file stem.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value_t = ldmres::metrics::DEFAULT_ROC_THRESHOLDS)]
    thresholds: usize,
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("LDMRES_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => bail!("LDMRES_LOG must be quiet, info or debug (got `{other}`)"),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_logging()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Train { config } => commands::train(&config, cli.seed),
        Command::Predict(a) => commands::predict(&a.model, &a.input, &a.output, a.gt.as_deref().zip(a.overlay.as_deref())),
        Command::Evaluate(a) => {
            commands::evaluate(&a.model, &a.manifest, &a.report, a.roc.as_deref(), a.dataset, a.thresholds)
        }
        Command::Params { config, model } => commands::params(config.as_deref(), model.as_deref(), cli.seed),
        Command::Summary { model } => commands::summary(&model),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
