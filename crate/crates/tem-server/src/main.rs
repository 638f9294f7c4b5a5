use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;

use tem_core::candidate_index::load_index;
use tem_core::embedding_store::{load_embeddings, LoadOptions, MetricSpace};
use tem_server::AppState;

/// Privatization service over one embedding space.
#[derive(Debug, Parser)]
#[command(name = "tem-server", version, about)]
struct Args {
    /// Embeddings in word-per-line text format (word then components).
    #[arg(long)]
    embeddings: PathBuf,

    /// Prebuilt candidate index for the same embeddings.
    #[arg(long)]
    index: Option<PathBuf>,

    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8615")]
    addr: String,

    /// Skip the first line of the embeddings file (count/dim header).
    #[arg(long)]
    skip_header: bool,

    /// Require this embedding dimensionality.
    #[arg(long)]
    expected_dim: Option<usize>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().init();
    let args = Args::parse();

    let file = File::open(&args.embeddings)
        .with_context(|| format!("opening embeddings {}", args.embeddings.display()))?;
    let options = LoadOptions {
        expected_dim: args.expected_dim,
        skip_header: args.skip_header,
    };
    let loaded = load_embeddings(BufReader::new(file), &options)?;
    for warning in &loaded.warnings {
        tracing::warn!(line = warning.line, "{}", warning.message);
    }
    let space = Arc::new(MetricSpace::euclidean(loaded.vocabulary, loaded.matrix)?);
    tracing::info!(vocab = space.len(), dim = space.dim(), "embeddings loaded");

    let index = match &args.index {
        Some(path) => {
            let file =
                File::open(path).with_context(|| format!("opening index {}", path.display()))?;
            let index = load_index(BufReader::new(file), &space)?;
            tracing::info!(gamma = index.gamma(), "candidate index loaded");
            Some(Arc::new(index))
        }
        None => None,
    };

    tem_server::serve(&args.addr, AppState::new(space, index)?).await
}
