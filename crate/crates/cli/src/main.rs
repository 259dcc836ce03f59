//! `facedesc`: describe networks, extract face descriptors and score
//! retrieval experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data or format,
//! 3 internal.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facedesc::selftest::Fault;
use facedesc::similarity::DistanceKind;

use config::{ExperimentConfig, OutputFormat};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] facedesc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(facedesc::Error::Internal(_)) => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "facedesc", version, about = "Face descriptors with average-biased rectifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the layer table of a weight container, or of the built-in
    /// VGG-Face schedule when no model is given.
    DescribeModel {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write one descriptor matrix per variant for the images in a manifest.
    Extract(ExperimentArgs),
    /// Leave-one-out retrieval metrics per variant, distance and cutoff.
    Evaluate(ExperimentArgs),
    /// Run the bundled invariant checks.
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight container (.vgfm).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory of descriptor matrices written by `extract`.
    #[arg(long)]
    descriptors: Option<PathBuf>,
    /// JSON list of {"path"|"descriptor", "subject"} records.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Descriptor variant such as 35R, 33AR2 or 33,35AR. Repeatable.
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Repeatable. Default chisq.
    #[arg(long = "distance")]
    distances: Vec<DistanceKind>,
    /// Number of retrieved images. Repeatable. Default 1, 5 and 10.
    #[arg(long = "cutoff")]
    cutoffs: Vec<usize>,
    /// Score ANMRR over the first `cutoff` results only.
    #[arg(long)]
    anmrr_window: bool,
    /// Output directory for `extract`, report file for `evaluate`
    /// (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads. Default: all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Variants as columns.
    #[arg(long)]
    pivot: bool,
    /// Log and drop images that fail to load instead of aborting.
    #[arg(long)]
    skip_errors: bool,
}

impl ExperimentArgs {
    fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            model: self.model,
            descriptors: self.descriptors,
            manifest: self.manifest,
            variants: self.variants,
            distances: self.distances,
            cutoffs: self.cutoffs,
            output: self.output,
            format: self.format,
            threads: self.threads,
            anmrr_window: self.anmrr_window,
            pivot: self.pivot,
            skip_errors: self.skip_errors,
        };
        Ok(file.overlay(flags))
    }
}

fn with_pool<T>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Core(facedesc::Error::Internal(format!("thread pool: {e}"))))?;
    pool.install(f)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::DescribeModel { model } => commands::describe_model(model.as_deref()),
        Command::Selftest { inject_fault } => commands::selftest(inject_fault),
        Command::Extract(args) => {
            let config = args.resolve()?;
            with_pool(config.threads, || commands::extract(&config))
        }
        Command::Evaluate(args) => {
            let config = args.resolve()?;
            with_pool(config.threads, || commands::evaluate(&config))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(3),
    }
}
