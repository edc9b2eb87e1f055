//! `kdsketch`: build sketches over sharded point files, grow k-d trees from
//! them, audit the trees and run the accuracy and runtime studies.
//!
//! Exit status: 0 success, 1 usage or flag error, 2 data or I/O error,
//! 3 numeric failure (no usable transform).

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kdsketch::io::Encoding;
use kdsketch::{AccuracyParameter, DataDistribution};

#[derive(Debug, Parser)]
#[command(name = "kdsketch", version, about = "Sketch-based k-d trees over sharded data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sketch point data with the factorized basis; writes the recovered
    /// standard tensor to OUTPUT and the factorized tensor and transform beside it.
    Sketch(SketchArgs),
    /// Build and write the factorized-to-standard transform for an accuracy parameter.
    Transform(TransformArgs),
    /// Grow a k-d tree from a standard sketch file.
    Build(BuildArgs),
    /// Count the points of every leaf of a tree.
    Audit(AuditArgs),
    /// Build the exact median k-d tree directly from the data.
    Exact(ExactArgs),
    /// Leaf-count quantiles over a grid of correlations, depths and accuracy parameters.
    AccuracyStudy(StudyArgs),
    /// Per-phase wall-clock timings over the same grid.
    RuntimeStudy(StudyArgs),
}

/// Where points come from: shard files, or the seeded generator.
#[derive(Debug, Args)]
struct DataArgs {
    /// Point CSV files, one shard each. Without any, data is generated.
    #[arg(long = "input", num_args = 1..)]
    input: Vec<PathBuf>,
    /// Dimension; required for generated data, checked against files otherwise.
    #[arg(long = "p")]
    p: Option<usize>,
    /// Re-split the data into this many shards.
    #[arg(long)]
    shards: Option<usize>,
    /// Min-max scale the data into the unit cube first (one extra pass).
    #[arg(long)]
    scale: bool,
    /// Seed of the generator; required when no input files are given.
    #[arg(long)]
    seed: Option<u64>,
    /// Generator settings (n, p, distribution, margin, first rho).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of generated points.
    #[arg(long)]
    n: Option<usize>,
    /// Common correlation of generated normal data.
    #[arg(long)]
    rho: Option<f64>,
    /// Generator distribution.
    #[arg(long)]
    distribution: Option<DataDistribution>,
}

#[derive(Debug, Args)]
struct SketchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Accuracy parameter, factors separated by commas (e.g. 3,5).
    #[arg(long = "Jbar", alias = "jbar")]
    jbar: AccuracyParameter,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value = "csv")]
    format: Encoding,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long = "Jbar", alias = "jbar")]
    jbar: AccuracyParameter,
    #[arg(long, default_value = "csv")]
    format: Encoding,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Standard sketch file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    depth: usize,
    /// Expected dimension; an error if the sketch disagrees.
    #[arg(long = "p")]
    p: Option<usize>,
    /// Expected accuracy parameter; an error if the sketch disagrees.
    #[arg(long = "Jbar", alias = "jbar")]
    jbar: Option<AccuracyParameter>,
    /// Smallest allowed leaf fraction 2^-D (default 10/n).
    #[arg(long)]
    leaf_floor: Option<f64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Tree file.
    #[arg(long)]
    tree: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    depth: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Study configuration (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds; replace the configured list.
    #[arg(long, num_args = 1..)]
    seed: Vec<u64>,
    /// Override the configured shard count.
    #[arg(long)]
    shards: Option<usize>,
    /// Override the configured parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Numeric(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<kdsketch::Error>() {
            Some(kdsketch::Error::SingularTransform(_)) => Failure::Numeric(e),
            _ => Failure::Data(e),
        }
    }
}

impl From<kdsketch::Error> for Failure {
    fn from(e: kdsketch::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
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
    let result = match cli.command {
        Command::Sketch(a) => commands::sketch(a),
        Command::Transform(a) => commands::transform(a),
        Command::Build(a) => commands::build(a),
        Command::Audit(a) => commands::audit(a),
        Command::Exact(a) => commands::exact(a),
        Command::AccuracyStudy(a) => commands::accuracy_study(a),
        Command::RuntimeStudy(a) => commands::runtime_study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
