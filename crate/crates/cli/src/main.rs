mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqtrans::{Error, ModelVariant};

/// Sequence transformer experiments: data generation, training, ablations,
/// hyperparameter search and transform analysis.
#[derive(Parser)]
#[command(name = "seqtrans", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the model variant.
    #[arg(long)]
    pub variant: Option<ModelVariant>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark dataset and its ground-truth nuisances.
    Generate {
        /// TOML file with `version = 1` and a `[synthetic]` table; defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one variant; writes a checkpoint, the training report and metrics.
    Train(RunArgs),
    /// Train all four variants on shared splits and seeds.
    Ablation(RunArgs),
    /// Random hyperparameter search.
    Search {
        #[command(flatten)]
        run: RunArgs,
        /// Overrides the number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Dump per-example transformation parameters, signals and scatter plots.
    TransformDump {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Example id whose original and transformed signals are written (repeatable).
        #[arg(long = "example")]
        examples: Vec<String>,
        /// Which split to dump: train, validation or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Mean intra-class pairwise distance before and after the transform.
    Distance {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fit normalization statistics and category lists on the training split.
    FitSchema {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Data(_) | Error::UndefinedMetric(_) | Error::Io { .. } | Error::Serde(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("SEQTRANS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("SEQTRANS_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Generate { config, out, seed } => commands::generate(config.as_deref(), &out, seed),
        Command::Train(args) => commands::train(&args),
        Command::Ablation(args) => commands::ablation(&args),
        Command::Search { run, trials } => commands::search(&run, trials),
        Command::TransformDump {
            run,
            checkpoint,
            examples,
            split,
        } => commands::transform_dump(&run, &checkpoint, &examples, &split),
        Command::Distance { run, checkpoint, split } => commands::distance(&run, &checkpoint, &split),
        Command::FitSchema { run } => commands::fit_schema(&run),
    }
}

fn main() -> ExitCode {
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
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
