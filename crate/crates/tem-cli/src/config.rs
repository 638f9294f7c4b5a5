//! Optional TOML config file. Every key mirrors a command-line flag;
//! explicit flags always win over file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::common::CliError;
use tem_api::{MechanismKind, Mutation, OovPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepFormat {
    Csv,
    Json,
}

impl FromStr for SweepFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(SweepFormat::Csv),
            "json" => Ok(SweepFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub embeddings: Option<PathBuf>,
    pub skip_header: Option<bool>,
    pub expected_dim: Option<usize>,
    pub index: Option<PathBuf>,
    pub server: Option<String>,
    pub threads: Option<usize>,
    pub addr: Option<String>,

    pub mechanism: Option<MechanismKind>,
    /// Mechanism list for sweeps.
    pub mechanisms: Option<Vec<MechanismKind>>,
    pub epsilon: Option<f64>,
    /// Epsilon list for sweeps.
    pub epsilons: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub oov: Option<OovPolicy>,
    pub lowercase: Option<bool>,

    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub format: Option<SweepFormat>,

    pub trials: Option<u64>,
    pub alpha: Option<f64>,
    #[serde(rename = "break")]
    pub break_check: Option<Mutation>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::from_err(&format!("reading config {}", path.display()), e)
                })?;
                toml::from_str(&text).map_err(|e| {
                    CliError::from_err(&format!("parsing config {}", path.display()), e)
                })
            }
        }
    }
}
