//! Truncated exponential mechanism over candidate lists.
//!
//! For input w with candidate list L_w (every word within γ, always
//! including w itself), the mechanism scores
//!
//! ```text
//! member i:   f(i) = -d(w, i)
//! fallback:   f(*) = -gamma + (2/eps) * ln(|W \ L_w|)   (absent when empty)
//! ```
//!
//! adds independent Gumbel(0, 2/ε) noise to every score, and returns the
//! argmax; if the fallback wins, the output is a uniform draw from the
//! complement. The fallback aggregates the complement into one candidate
//! whose weight equals the total weight its members would have carried had
//! they been scored individually at the truncated distance γ, so the
//! sampler is distributionally identical to exponential selection over the
//! whole vocabulary with truncated scores. [`tem_exact_distribution`]
//! computes that flat distribution directly; [`tem_exact_distribution_two_stage`]
//! follows the sampler's two-stage shape. Both must agree to float
//! precision, and the verifier holds them to 1e-12.

use serde::Serialize;

use super::{Distribution, MechanismError, PrivacyParams, MAX_ORACLE_VOCAB};
use crate::candidate_index::CandidateSet;
use crate::embedding_store::WordId;
use crate::mechanisms::gumbel::sample_gumbel;
use crate::num::log_sum_exp;
use crate::rng::RandomSource;

/// A selection candidate: either a concrete word from the candidate list
/// or the aggregated fallback standing in for everything outside γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "word")]
pub enum Candidate {
    Word(WordId),
    Fallback,
}

/// Candidate with its noiseless utility score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub score: f64,
}

fn check_set(set: &CandidateSet, params: &PrivacyParams) -> Result<(), MechanismError> {
    if set.gamma() != params.gamma() {
        return Err(MechanismError::GammaMismatch {
            set: set.gamma(),
            params: params.gamma(),
        });
    }
    Ok(())
}

/// Noiseless scores for every selection candidate, members first in their
/// (distance, id) order, then the fallback when the complement is
/// non-empty.
pub fn tem_base_scores(
    set: &CandidateSet,
    params: &PrivacyParams,
) -> Result<Vec<ScoredCandidate>, MechanismError> {
    check_set(set, params)?;
    let mut scores: Vec<ScoredCandidate> = set
        .members()
        .iter()
        .map(|(id, d)| ScoredCandidate {
            candidate: Candidate::Word(*id),
            score: -d,
        })
        .collect();
    let cc = set.complement_count();
    if cc > 0 {
        scores.push(ScoredCandidate {
            candidate: Candidate::Fallback,
            score: -params.gamma() + (2.0 / params.epsilon()) * f64::from(cc).ln(),
        });
    }
    Ok(scores)
}

/// Runs one selection. Draws, in order, one Gumbel variate per candidate
/// as listed by [`tem_base_scores`], then one uniform index if the
/// fallback won. Exact ties on noisy scores (probability zero, but floats)
/// resolve to the smallest word id, with the fallback losing to any word.
pub fn tem_privatize_word(
    set: &CandidateSet,
    params: &PrivacyParams,
    rng: &mut RandomSource,
) -> Result<WordId, MechanismError> {
    let scores = tem_base_scores(set, params)?;
    let scale = params.gumbel_scale();

    let mut best = None::<(f64, Candidate)>;
    for sc in &scores {
        let noisy = sc.score + sample_gumbel(rng, scale);
        let wins = match &best {
            None => true,
            Some((bs, bc)) => {
                noisy > *bs
                    || (noisy == *bs
                        && match (sc.candidate, bc) {
                            (Candidate::Word(a), Candidate::Word(b)) => a < *b,
                            (Candidate::Word(_), Candidate::Fallback) => true,
                            (Candidate::Fallback, _) => false,
                        })
            }
        };
        if wins {
            best = Some((noisy, sc.candidate));
        }
    }

    match best.expect("candidate set is never empty").1 {
        Candidate::Word(id) => Ok(id),
        Candidate::Fallback => {
            let rank = rng.uniform_index(u64::from(set.complement_count())) as u32;
            Ok(set.complement_member(rank))
        }
    }
}

/// Exact output distribution over the whole vocabulary, computed flat:
/// weight exp(-ε·d(w,i)/2) for members, exp(-ε·γ/2) for every word outside
/// the list, normalized in the log domain.
pub fn tem_exact_distribution(
    set: &CandidateSet,
    params: &PrivacyParams,
) -> Result<Distribution, MechanismError> {
    exact_distribution_with_fallback_shift(set, params, 0.0)
}

/// Same distribution as [`tem_exact_distribution`], but assembled the way
/// the sampler actually runs: first the selection distribution over
/// members plus the aggregated fallback, then the fallback mass split
/// uniformly over the complement. Kept as an independent route so the
/// aggregation step itself is testable; the two routes agree to float
/// rounding.
pub fn tem_exact_distribution_two_stage(
    set: &CandidateSet,
    params: &PrivacyParams,
) -> Result<Distribution, MechanismError> {
    let total = set.total_words();
    if total > MAX_ORACLE_VOCAB {
        return Err(MechanismError::DomainTooLarge {
            size: total,
            max: MAX_ORACLE_VOCAB,
        });
    }
    let scores = tem_base_scores(set, params)?;
    let half_eps = params.epsilon() / 2.0;

    // Selection stage: Gumbel-argmax over scores f is softmax of f·ε/2.
    let log_weights: Vec<f64> = scores.iter().map(|sc| half_eps * sc.score).collect();
    let log_z = log_sum_exp(&log_weights);

    let cc = set.complement_count();
    let mut log_probs = vec![f64::NEG_INFINITY; total];
    for (sc, lw) in scores.iter().zip(&log_weights) {
        match sc.candidate {
            Candidate::Word(id) => log_probs[id.index()] = lw - log_z,
            Candidate::Fallback => {
                // Resolution stage: uniform over the complement.
                let per_word = lw - log_z - f64::from(cc).ln();
                let mut is_member = vec![false; total];
                for (id, _) in set.members() {
                    is_member[id.index()] = true;
                }
                for (id, member) in is_member.iter().enumerate() {
                    if !member {
                        log_probs[id] = per_word;
                    }
                }
            }
        }
    }
    Distribution::from_log_probs(log_probs)
}

/// Flat-route oracle with the fallback's aggregate log-weight shifted.
/// A shift of ln 2 models an implementation bug that doubles the fallback
/// weight; the verifier uses it to prove its own checks can fail.
pub(crate) fn exact_distribution_with_fallback_shift(
    set: &CandidateSet,
    params: &PrivacyParams,
    fallback_log_shift: f64,
) -> Result<Distribution, MechanismError> {
    let total = set.total_words();
    if total > MAX_ORACLE_VOCAB {
        return Err(MechanismError::DomainTooLarge {
            size: total,
            max: MAX_ORACLE_VOCAB,
        });
    }
    check_set(set, params)?;
    let half_eps = params.epsilon() / 2.0;
    let cc = set.complement_count();

    let mut log_weights: Vec<f64> = set.members().iter().map(|(_, d)| -half_eps * d).collect();
    let outside_log_weight = -half_eps * params.gamma() + fallback_log_shift;
    if cc > 0 {
        log_weights.push(f64::from(cc).ln() + outside_log_weight);
    }
    let log_z = log_sum_exp(&log_weights);

    let mut log_probs = vec![outside_log_weight - log_z; total];
    for ((id, _), lw) in set.members().iter().zip(&log_weights) {
        log_probs[id.index()] = lw - log_z;
    }
    Distribution::from_log_probs(log_probs)
}
