mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map};
use xaiunc_core::Error;

use commands::Context;

#[derive(Parser, Debug)]
#[command(name = "xaiunc", version, about = "Attribution uncertainty for blackbox binary classifiers")]
struct Cli {
    /// Root seed; every random stream derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (a directory for `generate`); stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset bundle
    Generate(commands::GenerateArgs),
    /// Train a classifier and write it as JSON
    Train(commands::TrainArgs),
    /// Explain one instance once
    Explain(commands::ExplainArgs),
    /// Uncertainty report over repeated runs on one instance
    Uncertainty(commands::UncertaintyArgs),
    /// Explainer-by-metric table, or plain versus boundary-informed sampling
    Benchmark(commands::BenchmarkArgs),
    /// Predict stable instances and score the prediction
    Stability(commands::StabilityArgs),
    /// Count near-equidistant boundary points around instances
    Complexity(commands::ComplexityArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 3,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::Schema(_) => 4,
        _ => 5,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid-input",
        Error::DimensionMismatch { .. } => "dimension-mismatch",
        Error::InvalidConfig(_) => "invalid-config",
        Error::Parse { .. } => "parse",
        Error::Schema(_) => "schema",
        Error::Training(_) => "training",
        Error::BoundaryNotFound { .. } => "boundary-not-found",
        Error::InsufficientCoalitions { .. } => "insufficient-coalitions",
        Error::Metric(_) => "metric",
        Error::UndefinedCorrelation(_) => "undefined-correlation",
        Error::RunFailed { .. } => "run-failed",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn run(cli: Cli) -> xaiunc_core::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(p) => config::read_config_file(p)?,
        None => Map::new(),
    };
    let ctx = Context {
        seed: cli.seed,
        file,
        out: cli.out,
    };
    match &cli.command {
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Explain(a) => commands::explain(&ctx, a),
        Command::Uncertainty(a) => commands::uncertainty(&ctx, a),
        Command::Benchmark(a) => commands::benchmark(&ctx, a),
        Command::Stability(a) => commands::stability(&ctx, a),
        Command::Complexity(a) => commands::complexity(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let body = json!({
                "error": { "kind": kind(&e), "message": e.to_string(), "exit_code": code }
            });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
