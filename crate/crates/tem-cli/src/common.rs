//! Shared plumbing: error type with exit codes, file IO, space loading.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tem_core::embedding_store::{load_embeddings, LoadOptions, MetricSpace};

/// Exit code 1: a verification check failed honestly.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code 2: usage, config, or data errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    /// Wraps any displayable error as a usage/config failure.
    pub fn from_err(context: &str, err: impl Display) -> Self {
        Self::usage(format!("{context}: {err}"))
    }
}

/// Loads embeddings and wraps them in a metric space; parser warnings go
/// to stderr so stdout stays machine-readable.
pub fn load_space(
    path: &Path,
    skip_header: bool,
    expected_dim: Option<usize>,
) -> Result<Arc<MetricSpace>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::from_err(&format!("opening {}", path.display()), e))?;
    let options = LoadOptions {
        expected_dim,
        skip_header,
    };
    let loaded = load_embeddings(BufReader::new(file), &options)
        .map_err(|e| CliError::from_err(&format!("loading {}", path.display()), e))?;
    for warning in &loaded.warnings {
        eprintln!(
            "warning: {} line {}: {}",
            path.display(),
            warning.line,
            warning.message
        );
    }
    let space = MetricSpace::euclidean(loaded.vocabulary, loaded.matrix)
        .map_err(|e| CliError::from_err("building metric space", e))?;
    Ok(Arc::new(space))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::from_err(&format!("reading {}", path.display()), e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Writes one line per entry to the path, or to stdout when absent.
pub fn write_lines(path: Option<&Path>, lines: &[String]) -> Result<(), CliError> {
    let mut body = lines.join("\n");
    if !lines.is_empty() {
        body.push('\n');
    }
    write_text(path, &body)
}

pub fn write_text(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::from_err(&format!("writing {}", path.display()), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::from_err("writing stdout", e))
        }
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body =
        serde_json::to_string_pretty(value).map_err(|e| CliError::from_err("encoding JSON", e))?;
    body.push('\n');
    std::fs::write(path, body)
        .map_err(|e| CliError::from_err(&format!("writing {}", path.display()), e))
}

/// A flag that is required (directly or via the config file) by the time
/// the command runs.
pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required option {flag}")))
}

pub fn require_path(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    require(value, flag)
}
