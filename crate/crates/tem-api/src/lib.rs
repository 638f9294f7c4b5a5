//! Request and response types for the tem privatization service.
//!
//! The server, the client crate, and the CLI all speak these shapes, so
//! a field rename here is a wire-format change everywhere at once. Enums
//! shared with the core library (mechanism kind, OOV policy, token
//! actions, corpus stats, verification reports) are re-exported rather
//! than mirrored, keeping one source of truth for their JSON encodings.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub use tem_core::corpus::{CorpusStats, SweepRow};
pub use tem_core::dp_verifier::{CheckOutcome, Mutation, SuiteReport};
pub use tem_core::mechanisms::{MechanismKind, OovPolicy, TokenAction};

/// `GET /healthz`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    /// Words in the loaded vocabulary.
    pub vocab: usize,
    /// Embedding dimensionality.
    pub dim: usize,
    /// Hex SHA-256 fingerprint of the loaded embedding space.
    pub fingerprint: String,
    /// Whether a prebuilt candidate index is loaded.
    pub index_loaded: bool,
}

/// `POST /v1/calibrate`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub epsilon: f64,
    pub beta: f64,
    /// Vocabulary size to calibrate for. Omit to use the server's space.
    #[serde(default)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResponse {
    pub gamma: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub vocab_size: usize,
}

/// Mechanism selection shared by privatization requests. Exactly one of
/// `gamma` / `beta` must be set for the truncated mechanism; both must be
/// absent for the vector-noise baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// `POST /v1/privatize`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivatizeRequest {
    pub lines: Vec<String>,
    #[serde(flatten)]
    pub spec: MechanismSpec,
    #[serde(default)]
    pub oov: OovPolicy,
    #[serde(default)]
    pub lowercase: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivatizeResponse {
    pub lines: Vec<String>,
    pub stats: CorpusStats,
    /// Radius actually used (calibrated from beta when requested).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// `POST /v1/privatize-word`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRequest {
    pub word: String,
    #[serde(flatten)]
    pub spec: MechanismSpec,
    #[serde(default)]
    pub oov: OovPolicy,
    #[serde(default)]
    pub lowercase: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordResponse {
    /// Empty when the action is `dropped`.
    pub word: String,
    pub action: TokenAction,
}

/// `POST /v1/distribution` — exact output distribution for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRequest {
    pub word: String,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub lowercase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordProb {
    pub word: String,
    pub prob: f64,
    /// Whether the word sits inside the input's truncation radius.
    pub within_gamma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResponse {
    pub word: String,
    pub epsilon: f64,
    pub gamma: f64,
    /// One entry per vocabulary word, in vocabulary order.
    pub probs: Vec<WordProb>,
}

/// `POST /v1/index/build`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildIndexRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildIndexResponse {
    pub gamma: f64,
    /// Candidate-list size -> number of words with a list of that size.
    pub size_histogram: BTreeMap<usize, usize>,
    /// The serialized index, base64-encoded.
    pub index_base64: String,
}

/// `POST /v1/verify`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct VerifyRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Run one check against a deliberately broken implementation.
    #[serde(rename = "break", default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
}

/// `POST /v1/sweep`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub lines: Vec<String>,
    pub mechanisms: Vec<MechanismKind>,
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub oov: OovPolicy,
    #[serde(default)]
    pub lowercase: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub rows: Vec<SweepRow>,
}

/// Every non-2xx response carries this body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}
