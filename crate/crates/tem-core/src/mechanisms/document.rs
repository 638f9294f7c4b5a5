//! Document-level privatization: one mechanism handle, applied per token.
//!
//! Tokens are privatized independently; by composition over the word
//! metric, a document of k tokens enjoys the k-fold additive guarantee.
//! Every token draws from its own substream of the document's random
//! source, so the result is independent of evaluation order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{madlib_privatize_word, tem_privatize_word, MechanismError, PrivacyParams};
use crate::candidate_index::{range_query, CandidateSet, TruncationIndex};
use crate::embedding_store::{MetricSpace, Vocabulary, WordId};
use crate::rng::RandomSource;

/// What to do with a token that is not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Fail the document.
    #[default]
    Error,
    /// Silently remove the token from the output.
    Drop,
    /// Copy the token through unprivatized. No privacy statement is made
    /// for passed-through tokens.
    Passthrough,
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Error => "error",
            OovPolicy::Drop => "drop",
            OovPolicy::Passthrough => "passthrough",
        })
    }
}

impl FromStr for OovPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(OovPolicy::Error),
            "drop" => Ok(OovPolicy::Drop),
            "passthrough" => Ok(OovPolicy::Passthrough),
            other => Err(format!(
                "unknown oov policy `{other}` (expected error, drop, or passthrough)"
            )),
        }
    }
}

/// What happened to one input token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenAction {
    /// Replaced by a mechanism draw (possibly the same word).
    Privatized,
    /// Removed under [`OovPolicy::Drop`].
    Dropped,
    /// Copied through under [`OovPolicy::Passthrough`].
    Passthrough,
}

/// Which mechanism to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Tem,
    Madlib,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Tem => "tem",
            MechanismKind::Madlib => "madlib",
        })
    }
}

impl FromStr for MechanismKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tem" => Ok(MechanismKind::Tem),
            "madlib" => Ok(MechanismKind::Madlib),
            other => Err(format!(
                "unknown mechanism `{other}` (expected tem or madlib)"
            )),
        }
    }
}

/// Where the truncated mechanism gets candidate lists from: a precomputed
/// index (O(1) per token) or an on-the-fly scan of the space (O(|W|·n)
/// per token). Both yield bit-identical sets, so outputs under a fixed
/// seed do not depend on the choice.
#[derive(Debug, Clone)]
pub enum CandidateSource {
    Precomputed(Arc<TruncationIndex>),
    Scan(Arc<MetricSpace>),
}

impl CandidateSource {
    fn candidate_set(&self, word: WordId, gamma: f64) -> Result<CandidateSet, MechanismError> {
        match self {
            CandidateSource::Precomputed(index) => {
                index
                    .candidate_set(word)
                    .cloned()
                    .ok_or(MechanismError::Embedding(
                        crate::embedding_store::EmbeddingError::IdOutOfRange {
                            id: word.0,
                            size: index.len(),
                        },
                    ))
            }
            CandidateSource::Scan(space) => Ok(range_query(space, word, gamma)?),
        }
    }
}

/// A ready-to-run mechanism: parameters plus whatever state the sampler
/// needs. Immutable and cheap to clone; safe to share across threads.
#[derive(Debug, Clone)]
pub enum Mechanism {
    Tem {
        params: PrivacyParams,
        source: CandidateSource,
    },
    Madlib {
        epsilon: f64,
        space: Arc<MetricSpace>,
    },
}

impl Mechanism {
    /// Truncated exponential mechanism. A precomputed source must have
    /// been built at exactly the γ the parameters carry.
    pub fn tem(params: PrivacyParams, source: CandidateSource) -> Result<Self, MechanismError> {
        if let CandidateSource::Precomputed(index) = &source {
            if index.gamma() != params.gamma() {
                return Err(MechanismError::GammaMismatch {
                    set: index.gamma(),
                    params: params.gamma(),
                });
            }
        }
        Ok(Mechanism::Tem { params, source })
    }

    pub fn madlib(epsilon: f64, space: Arc<MetricSpace>) -> Result<Self, MechanismError> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(MechanismError::InvalidEpsilon(epsilon));
        }
        Ok(Mechanism::Madlib { epsilon, space })
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Tem { .. } => MechanismKind::Tem,
            Mechanism::Madlib { .. } => MechanismKind::Madlib,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Mechanism::Tem { params, .. } => params.epsilon(),
            Mechanism::Madlib { epsilon, .. } => *epsilon,
        }
    }

    /// Truncation radius, for mechanisms that have one.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            Mechanism::Tem { params, .. } => Some(params.gamma()),
            Mechanism::Madlib { .. } => None,
        }
    }

    /// Privatizes a single in-vocabulary word.
    pub fn privatize_word(
        &self,
        word: WordId,
        rng: &mut RandomSource,
    ) -> Result<WordId, MechanismError> {
        match self {
            Mechanism::Tem { params, source } => {
                let set = source.candidate_set(word, params.gamma())?;
                tem_privatize_word(&set, params, rng)
            }
            Mechanism::Madlib { epsilon, space } => {
                madlib_privatize_word(space, word, *epsilon, rng)
            }
        }
    }
}

/// Builds a mechanism from user-facing configuration. For the truncated
/// mechanism exactly one of `gamma` and `beta` must be set (β is resolved
/// to γ against the vocabulary size), and a supplied index must match the
/// space and the resolved γ. The baseline ignores γ, β, and the index.
pub fn build_mechanism(
    kind: MechanismKind,
    epsilon: f64,
    gamma: Option<f64>,
    beta: Option<f64>,
    space: &Arc<MetricSpace>,
    index: Option<&Arc<TruncationIndex>>,
) -> Result<Mechanism, MechanismError> {
    match kind {
        MechanismKind::Madlib => Mechanism::madlib(epsilon, Arc::clone(space)),
        MechanismKind::Tem => {
            let params = match (gamma, beta) {
                (Some(g), None) => PrivacyParams::new(epsilon, g)?,
                (None, Some(b)) => PrivacyParams::calibrated(epsilon, b, space.len())?,
                _ => return Err(MechanismError::AmbiguousTruncation),
            };
            let source = match index {
                Some(index) => {
                    if !index.matches_space(space) {
                        return Err(MechanismError::IndexSpaceMismatch);
                    }
                    CandidateSource::Precomputed(Arc::clone(index))
                }
                None => CandidateSource::Scan(Arc::clone(space)),
            };
            Mechanism::tem(params, source)
        }
    }
}

/// Privatizes one document (a token sequence). Token i draws from
/// `rng.substream(i)`, so the mapping from input to output tokens is a
/// pure function of (seed path, token index, token). Returns the output
/// tokens and one action per input token; dropped tokens leave no output.
pub fn privatize_document(
    tokens: &[&str],
    vocabulary: &Vocabulary,
    mechanism: &Mechanism,
    policy: OovPolicy,
    rng: &RandomSource,
) -> Result<(Vec<String>, Vec<TokenAction>), MechanismError> {
    let mut output = Vec::with_capacity(tokens.len());
    let mut actions = Vec::with_capacity(tokens.len());
    for (i, token) in tokens.iter().enumerate() {
        match vocabulary.id(token) {
            Some(word) => {
                let mut token_rng = rng.substream(i as u64);
                let out = mechanism.privatize_word(word, &mut token_rng)?;
                output.push(
                    vocabulary
                        .word(out)
                        .expect("mechanism outputs stay in the vocabulary")
                        .to_string(),
                );
                actions.push(TokenAction::Privatized);
            }
            None => match policy {
                OovPolicy::Error => {
                    return Err(MechanismError::OutOfVocabulary((*token).to_string()))
                }
                OovPolicy::Drop => actions.push(TokenAction::Dropped),
                OovPolicy::Passthrough => {
                    output.push((*token).to_string());
                    actions.push(TokenAction::Passthrough);
                }
            },
        }
    }
    Ok((output, actions))
}
