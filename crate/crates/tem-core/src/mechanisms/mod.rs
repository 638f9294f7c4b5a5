//! Word privatization mechanisms under metric differential privacy.
//!
//! A mechanism M over the word metric space satisfies, for every pair of
//! inputs w, w' and every output y,
//!
//! ```text
//! P[M(w) = y] <= exp(eps * d(w, w')) * P[M(w') = y]
//! ```
//!
//! Two mechanisms live here. The truncated exponential mechanism scores
//! every candidate within distance γ of the input by its negated distance,
//! aggregates everything farther away into one fallback candidate, adds
//! Gumbel noise with scale 2/ε, and returns the argmax; when the fallback
//! wins, the output is drawn uniformly from the words outside γ. The
//! calibrated-noise baseline perturbs the input's embedding vector with
//! noise whose density decays as exp(-ε·‖z‖) and returns the nearest
//! vocabulary word.
//!
//! Both samplers are deterministic functions of a [`RandomSource`], so a
//! fixed seed pins every output. [`tem::tem_exact_distribution`] is the
//! closed-form output distribution used by the verifier to check the
//! samplers against ground truth.

pub mod document;
pub mod gumbel;
pub mod madlib;
pub mod tem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate_index::IndexError;
use crate::embedding_store::{EmbeddingError, WordId};

pub use document::{
    build_mechanism, privatize_document, CandidateSource, Mechanism, MechanismKind, OovPolicy,
    TokenAction,
};
pub use gumbel::{gumbel_from_uniform, sample_gumbel};
pub use madlib::{madlib_privatize_word, sample_exp_ball_noise};
pub use tem::{
    tem_base_scores, tem_exact_distribution, tem_exact_distribution_two_stage, tem_privatize_word,
    Candidate, ScoredCandidate,
};

/// Exact distributions are materialized per word; past this vocabulary
/// size the O(|W|^2) cost of a full oracle table stops being a debugging
/// tool. Sampling has no such limit.
pub const MAX_ORACLE_VOCAB: usize = 10_000;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("gamma must be nonnegative and finite, got {0}")]
    InvalidGamma(f64),
    #[error("beta must lie strictly between 0 and 1, got {0}")]
    InvalidBeta(f64),
    #[error("calibration needs at least 2 words, vocabulary has {0}")]
    VocabTooSmall(usize),
    #[error("candidate set was computed at gamma {set}, parameters require {params}")]
    GammaMismatch { set: f64, params: f64 },
    #[error("exact distribution supports at most {max} words, vocabulary has {size}")]
    DomainTooLarge { size: usize, max: usize },
    #[error("distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("index fingerprint does not match the space it is used with")]
    IndexSpaceMismatch,
    #[error("exactly one of gamma and beta must be set for the truncated mechanism")]
    AmbiguousTruncation,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

// --- parameters ---

/// Validated privacy parameters: ε > 0 and truncation radius γ ≥ 0, both
/// finite. When γ was derived from a utility target β, the β is kept for
/// reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    gamma: f64,
    beta: Option<f64>,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self, MechanismError> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(MechanismError::InvalidEpsilon(epsilon));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(MechanismError::InvalidGamma(gamma));
        }
        Ok(Self {
            epsilon,
            gamma,
            beta: None,
        })
    }

    /// Derives γ from a plausible-deniability target β over a vocabulary
    /// of `vocab_size` words; see [`calibrate_gamma`].
    pub fn calibrated(epsilon: f64, beta: f64, vocab_size: usize) -> Result<Self, MechanismError> {
        let gamma = calibrate_gamma(epsilon, beta, vocab_size)?;
        let mut params = Self::new(epsilon, gamma)?;
        params.beta = Some(beta);
        Ok(params)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// Scale of the Gumbel noise added to candidate scores. The score
    /// function has sensitivity 1 with respect to the word metric, so a
    /// scale of 2/ε yields ε-metric-DP for the selection step.
    pub fn gumbel_scale(&self) -> f64 {
        2.0 / self.epsilon
    }
}

/// Smallest truncation radius that caps the worst-case probability of
/// leaving the candidate list at β:
///
/// ```text
/// gamma = max(0, (2/eps) * ln((1 - beta) * (|W| - 1) / beta))
/// ```
///
/// At this γ, an input whose candidate list contains only itself puts
/// exactly β of its output mass outside the list; any richer list puts
/// less. Large β can make the raw value negative, in which case 0 (no
/// deniability needed beyond the list itself) is returned.
pub fn calibrate_gamma(epsilon: f64, beta: f64, vocab_size: usize) -> Result<f64, MechanismError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(MechanismError::InvalidEpsilon(epsilon));
    }
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(MechanismError::InvalidBeta(beta));
    }
    if vocab_size < 2 {
        return Err(MechanismError::VocabTooSmall(vocab_size));
    }
    let others = (vocab_size - 1) as f64;
    let gamma = (2.0 / epsilon) * ((1.0 - beta) * others / beta).ln();
    Ok(gamma.max(0.0))
}

// --- output distribution ---

/// Exact output distribution of a mechanism over the whole vocabulary,
/// indexed by word id. Log probabilities are kept alongside probabilities
/// so privacy ratio checks never divide two small floats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Distribution {
    /// Builds the distribution from log probabilities, checking that the
    /// exponentiated mass sums to 1 within 1e-9.
    pub(crate) fn from_log_probs(log_probs: Vec<f64>) -> Result<Self, MechanismError> {
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MechanismError::NotNormalized { sum });
        }
        Ok(Self { probs, log_probs })
    }

    /// Number of words in the support (the full vocabulary).
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, word: WordId) -> f64 {
        self.probs[word.index()]
    }

    pub fn log_prob(&self, word: WordId) -> f64 {
        self.log_probs[word.index()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Total variation distance to another distribution over the same
    /// support: half the L1 distance.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        assert_eq!(self.probs.len(), other.len());
        0.5 * self
            .probs
            .iter()
            .zip(other)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    /// Largest absolute pointwise probability difference to another
    /// distribution over the same support.
    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len());
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}
