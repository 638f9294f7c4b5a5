//! `tem` — metric-DP text privatization.
//!
//! Subcommands run locally against an embeddings file by default; pass
//! `--server URL` to run the same operation against a running
//! `tem-server` instead. Exit codes: 0 success, 1 a verification check
//! failed, 2 usage/config/data errors.

mod common;
mod config;
mod ops;
mod remote;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use common::CliError;
use config::FileConfig;
use tem_api::{MechanismKind, Mutation, OovPolicy};

#[derive(Debug, Parser)]
#[command(name = "tem", version, about = "Metric-DP text privatization")]
struct Cli {
    /// TOML config file; explicit flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for parallel sections (default: all cores).
    /// Outputs are identical regardless of the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run against a tem server at this base URL instead of locally.
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Precompute candidate lists for a truncation radius and save them.
    BuildIndex(BuildIndexArgs),
    /// Privatize a line corpus word by word.
    Privatize(PrivatizeArgs),
    /// Run the privacy/utility verification suite.
    Verify(VerifyArgs),
    /// Privatize one corpus under every (mechanism, epsilon) combination.
    Sweep(SweepArgs),
    /// Serve the HTTP API over one embedding space.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    /// Embeddings in word-per-line text format (word then components).
    #[arg(long)]
    embeddings: Option<PathBuf>,

    /// Skip the first line of the embeddings file (count/dim header).
    #[arg(long)]
    skip_header: bool,

    /// Require this embedding dimensionality.
    #[arg(long)]
    expected_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    embeddings: EmbeddingArgs,

    /// Truncation radius (exclusive with --beta).
    #[arg(long)]
    gamma: Option<f64>,

    /// Deniability target in (0, 1); calibrates gamma (needs --epsilon).
    #[arg(long)]
    beta: Option<f64>,

    /// Privacy parameter, used only to calibrate gamma from --beta.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Where to write the index.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrivatizeArgs {
    #[command(flatten)]
    embeddings: EmbeddingArgs,

    /// Mechanism: tem (truncated exponential) or madlib (vector noise).
    #[arg(long)]
    mechanism: Option<MechanismKind>,

    /// Privacy parameter epsilon (> 0).
    #[arg(long)]
    epsilon: Option<f64>,

    /// Truncation radius for tem (exclusive with --beta).
    #[arg(long)]
    gamma: Option<f64>,

    /// Deniability target for tem in (0, 1); calibrates gamma.
    #[arg(long)]
    beta: Option<f64>,

    /// Seed for the deterministic random stream.
    #[arg(long)]
    seed: Option<u64>,

    /// Out-of-vocabulary tokens: error, drop, or passthrough.
    #[arg(long)]
    oov: Option<OovPolicy>,

    /// Lowercase input tokens before vocabulary lookup.
    #[arg(long)]
    lowercase: bool,

    /// Prebuilt candidate index (tem only; radius must match).
    #[arg(long)]
    index: Option<PathBuf>,

    /// Input corpus, one document per line.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Output path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Write a JSON run report (parameters and corpus stats) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    embeddings: EmbeddingArgs,

    /// Privacy parameter for the checked instances.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Deniability target for the checked instances.
    #[arg(long)]
    beta: Option<f64>,

    /// Monte Carlo trials per input word (minimum 10000).
    #[arg(long)]
    trials: Option<u64>,

    /// Significance level for interval and distribution tests.
    #[arg(long)]
    alpha: Option<f64>,

    /// Seed for the deterministic random stream.
    #[arg(long)]
    seed: Option<u64>,

    /// Run one check against a deliberately broken implementation; the
    /// suite must then fail (exit 1). Values: tem-bot-weight,
    /// index-drop-candidate, identity-sampler.
    #[arg(long = "break", value_name = "MUTATION")]
    break_check: Option<Mutation>,

    /// Write the full JSON suite report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    embeddings: EmbeddingArgs,

    /// Mechanisms to sweep, comma separated (e.g. tem,madlib).
    #[arg(long, value_delimiter = ',')]
    mechanism: Vec<MechanismKind>,

    /// Epsilons to sweep, comma separated (e.g. 0.5,1,2).
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,

    /// Fixed truncation radius for tem rows (exclusive with --beta).
    #[arg(long)]
    gamma: Option<f64>,

    /// Deniability target; recalibrates gamma per epsilon.
    #[arg(long)]
    beta: Option<f64>,

    /// Seed shared by every cell (common random numbers).
    #[arg(long)]
    seed: Option<u64>,

    /// Out-of-vocabulary tokens: error, drop, or passthrough.
    #[arg(long)]
    oov: Option<OovPolicy>,

    /// Lowercase input tokens before vocabulary lookup.
    #[arg(long)]
    lowercase: bool,

    /// Input corpus, one document per line.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Output path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Output format: csv or json.
    #[arg(long)]
    format: Option<config::SweepFormat>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    embeddings: EmbeddingArgs,

    /// Prebuilt candidate index for the same embeddings.
    #[arg(long)]
    index: Option<PathBuf>,

    /// Address to listen on.
    #[arg(long)]
    addr: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            std::process::exit(err.code);
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let file_config = FileConfig::load(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(file_config.threads) {
        if threads == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // Outputs never depend on the pool size; this only bounds
        // parallelism. Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let server = cli.server.or_else(|| file_config.server.clone());

    match cli.command {
        Command::BuildIndex(args) => match server {
            Some(url) => remote::build_index(&url, args, &file_config),
            None => ops::build_index(args, &file_config),
        },
        Command::Privatize(args) => match server {
            Some(url) => remote::privatize(&url, args, &file_config),
            None => ops::privatize(args, &file_config),
        },
        Command::Verify(args) => match server {
            Some(url) => remote::verify(&url, args, &file_config),
            None => ops::verify(args, &file_config),
        },
        Command::Sweep(args) => match server {
            Some(url) => remote::sweep(&url, args, &file_config),
            None => ops::sweep(args, &file_config),
        },
        Command::Serve(args) => ops::serve(args, &file_config),
    }
}
