use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ftu_cli::config::PipelineConfig;
use ftu_cli::errors::{CliError, Result};
use ftu_cli::commands;

#[derive(Parser)]
#[command(
    name = "ftu",
    version,
    about = "Functional-tissue-unit segmentation pipeline: dataset preparation, \
             pseudo-labeling, sliding-window ensemble inference, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale (and optionally histogram-match) a labeled dataset.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        /// Input manifest CSV: id,source,organ,pixel_size,width,height,image_path,mask.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; must not already hold files.
        #[arg(long)]
        output: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the configured ensemble over a manifest and write probability
    /// maps, PNG masks, and an RLE submission file.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Score predictions (a masks directory or a submission CSV) against a
    /// truth manifest.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        /// Report CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Optional id,fold CSV for a per-fold breakdown.
        #[arg(long)]
        folds: Option<PathBuf>,
    },
    /// Assign organ-stratified cross-validation folds.
    Folds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label a pool manifest with the configured ensemble.
    PseudoLabel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Labeling round recorded in the output manifest.
        #[arg(long, default_value_t = 1)]
        round: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Serve a built-in predictor over stdin/stdout (the subprocess
    /// protocol); used as an external ensemble member.
    ReferencePredictor {
        /// Predictor spec: constant:<p>, channel-identity, or
        /// luminance-sigmoid[:gain].
        #[arg(long)]
        kind: String,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { config, manifest, output, seed, threads } => {
            let config = load_config(&config, seed)?;
            with_pool(threads, || commands::prepare::run(&config, &manifest, &output))
        }
        Command::Infer { config, manifest, output, seed, threads } => {
            let config = load_config(&config, seed)?;
            with_pool(threads, || commands::infer::run(&config, &manifest, &output))
        }
        Command::Evaluate { config, predictions, truths, output, folds } => {
            let config = load_config(&config, None)?;
            commands::evaluate::run(
                &config,
                &predictions,
                &truths,
                output.as_deref(),
                folds.as_deref(),
            )
        }
        Command::Folds { config, manifest, output, k, seed } => {
            let config = load_config(&config, seed)?;
            commands::folds::run(&config, &manifest, &output, k)
        }
        Command::PseudoLabel { config, manifest, output, round, seed, threads } => {
            let config = load_config(&config, seed)?;
            with_pool(threads, || commands::pseudo::run(&config, &manifest, &output, round))
        }
        Command::ReferencePredictor { kind } => commands::serve::run(&kind),
        Command::DefaultConfig => {
            println!("{}", PipelineConfig::default().to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
