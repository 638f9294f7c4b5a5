//! Numerical verification of privacy and utility claims.
//!
//! Checks come in three strengths:
//!
//! * **Exhaustive** checks enumerate every (input, input', output) triple
//!   on a small vocabulary and compare exact log probabilities. A pass is
//!   a proof for that instance, up to float tolerance.
//! * **Analytic** checks compare closed-form expressions (calibration,
//!   utility mass) against oracle-summed mass.
//! * **Monte Carlo** checks estimate output frequencies and certify a
//!   violation when confidence intervals separate beyond the allowed
//!   ratio. A Monte Carlo pass means *no violation was certified*; it is
//!   never a proof of privacy.
//!
//! Every check is deterministic given (space, parameters, seed): reports
//! can be diffed byte for byte across runs. The [`Mutation`] hooks run a
//! check against a deliberately broken implementation, so the test suite
//! can demonstrate that each check is able to fail.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, Normal};
use thiserror::Error;

use crate::candidate_index::{build_index, range_query, CandidateSet, IndexError, TruncationIndex};
use crate::embedding_store::{EmbeddingError, MetricSpace, WordId};
use crate::mechanisms::tem::exact_distribution_with_fallback_shift;
use crate::mechanisms::{
    calibrate_gamma, madlib_privatize_word, tem_exact_distribution,
    tem_exact_distribution_two_stage, tem_privatize_word, Distribution, MechanismError,
    PrivacyParams,
};
use crate::rng::RandomSource;
use crate::synth;

/// Largest tolerated log-ratio excess in exhaustive privacy checks.
pub const EXACT_LOG_RATIO_TOLERANCE: f64 = 1e-9;
/// Largest tolerated pointwise probability gap between two exact oracle
/// routes that must agree.
pub const ORACLE_AGREEMENT_TOLERANCE: f64 = 1e-12;
/// Exhaustive sensitivity scan is O(|W|^3).
pub const MAX_SENSITIVITY_VOCAB: usize = 200;
/// Exhaustive ratio scan is O(|W|^3) with an oracle per word.
pub const MAX_EXACT_DP_VOCAB: usize = 1_000;
/// Monte Carlo estimates need every output bin populated to say anything.
pub const MAX_MONTE_CARLO_VOCAB: usize = 100;
/// Below this trial count the intervals are too wide to certify anything.
pub const MIN_MONTE_CARLO_TRIALS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("check supports at most {max} words, space has {size}")]
    DomainTooLarge { size: usize, max: usize },
    #[error("Monte Carlo check needs at least {min} trials, got {got}")]
    TooFewTrials { got: u64, min: u64 },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("gamma must be nonnegative (infinity allowed), got {0}")]
    InvalidGamma(f64),
    #[error("oracle for word {input} covers {len} words, space has {expected}")]
    WrongSupport {
        input: u32,
        len: usize,
        expected: usize,
    },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

fn distance_matrix(space: &MetricSpace) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    let m = space.len();
    let mut rows = Vec::with_capacity(m);
    for w in 0..m as u32 {
        let mut row = Vec::with_capacity(m);
        for v in 0..m as u32 {
            row.push(space.distance(WordId(w), WordId(v))?);
        }
        rows.push(row);
    }
    Ok(rows)
}

// --- exhaustive metric-DP check ---

/// Worst (input, input', output) triple of a ratio scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorstTriple {
    pub w: u32,
    pub w_prime: u32,
    pub output: u32,
}

/// Result of [`check_metric_dp_exact`].
#[derive(Debug, Clone, Serialize)]
pub struct DpCheckReport {
    pub epsilon: f64,
    pub vocab: usize,
    /// Ordered pairs (w, w'), w != w', each scanned over every output.
    pub pairs_checked: u64,
    /// max over triples of ln P_w(y) - ln P_w'(y) - eps * d(w, w').
    /// Nonpositive means the definition holds exactly.
    pub max_log_ratio_violation: f64,
    pub worst: Option<WorstTriple>,
    pub passed: bool,
}

/// Exhaustively checks the metric-DP inequality for an exact oracle:
/// for every ordered pair of inputs and every output, the log probability
/// ratio must not exceed ε times the input distance by more than
/// [`EXACT_LOG_RATIO_TOLERANCE`]. The comparison runs in the log domain,
/// so small probabilities lose no precision to division.
pub fn check_metric_dp_exact<F>(
    space: &MetricSpace,
    epsilon: f64,
    oracle: F,
) -> Result<DpCheckReport, VerifyError>
where
    F: Fn(WordId) -> Result<Distribution, MechanismError> + Sync,
{
    let m = space.len();
    if m > MAX_EXACT_DP_VOCAB {
        return Err(VerifyError::DomainTooLarge {
            size: m,
            max: MAX_EXACT_DP_VOCAB,
        });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(VerifyError::Mechanism(MechanismError::InvalidEpsilon(
            epsilon,
        )));
    }
    let dists: Result<Vec<Distribution>, MechanismError> = (0..m as u32)
        .into_par_iter()
        .map(|w| oracle(WordId(w)))
        .collect();
    let dists = dists?;
    for (w, dist) in dists.iter().enumerate() {
        if dist.len() != m {
            return Err(VerifyError::WrongSupport {
                input: w as u32,
                len: dist.len(),
                expected: m,
            });
        }
    }
    let distances = distance_matrix(space)?;

    let per_input: Vec<(f64, WorstTriple)> = (0..m)
        .into_par_iter()
        .map(|w| {
            let lp_w = dists[w].log_probs();
            let mut worst = (
                f64::NEG_INFINITY,
                WorstTriple {
                    w: 0,
                    w_prime: 0,
                    output: 0,
                },
            );
            for w_prime in 0..m {
                if w_prime == w {
                    continue;
                }
                let lp_p = dists[w_prime].log_probs();
                let budget = epsilon * distances[w][w_prime];
                for y in 0..m {
                    let violation = lp_w[y] - lp_p[y] - budget;
                    if violation > worst.0 {
                        worst = (
                            violation,
                            WorstTriple {
                                w: w as u32,
                                w_prime: w_prime as u32,
                                output: y as u32,
                            },
                        );
                    }
                }
            }
            worst
        })
        .collect();

    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    for (violation, triple) in per_input {
        if violation > max_violation {
            max_violation = violation;
            worst = Some(triple);
        }
    }
    Ok(DpCheckReport {
        epsilon,
        vocab: m,
        pairs_checked: (m as u64) * (m as u64 - 1),
        max_log_ratio_violation: max_violation,
        worst,
        passed: max_violation <= EXACT_LOG_RATIO_TOLERANCE,
    })
}

// --- sensitivity of the truncated score ---

/// How a candidate relates to the truncation radius of the two inputs
/// being compared: "within" means the candidate's exact distance is used,
/// otherwise the score is clamped at -γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationCase {
    BothWithin,
    OnlyFirstWithin,
    OnlySecondWithin,
    NeitherWithin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaseCounts {
    pub both_within: u64,
    pub only_first_within: u64,
    pub only_second_within: u64,
    pub neither_within: u64,
}

impl CaseCounts {
    fn bump(&mut self, case: TruncationCase) {
        match case {
            TruncationCase::BothWithin => self.both_within += 1,
            TruncationCase::OnlyFirstWithin => self.only_first_within += 1,
            TruncationCase::OnlySecondWithin => self.only_second_within += 1,
            TruncationCase::NeitherWithin => self.neither_within += 1,
        }
    }

    fn merge(&mut self, other: &CaseCounts) {
        self.both_within += other.both_within;
        self.only_first_within += other.only_first_within;
        self.only_second_within += other.only_second_within;
        self.neither_within += other.neither_within;
    }

    pub fn all_nonzero(&self) -> bool {
        self.both_within > 0
            && self.only_first_within > 0
            && self.only_second_within > 0
            && self.neither_within > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityWorst {
    pub candidate: u32,
    pub w: u32,
    pub w_prime: u32,
    pub case: TruncationCase,
    pub violation: f64,
}

/// Result of [`check_sensitivity_lemma`].
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub gamma: f64,
    pub vocab: usize,
    /// All (candidate, w, w') triples, ordered pairs including w = w'.
    pub triples_checked: u64,
    /// max over triples of |f(i,w) - f(i,w')| - d(w, w') where
    /// f(i, w) = -min(d(i, w), gamma). Nonpositive means the truncated
    /// score is 1-sensitive in the word metric.
    pub max_violation: f64,
    pub worst: Option<SensitivityWorst>,
    pub case_counts: CaseCounts,
    pub passed: bool,
}

/// Exhaustively verifies that the truncated score f(i, w) = -min(d(i, w), γ)
/// changes by at most d(w, w') when the input moves from w to w'. Every
/// triple is classified by whether the candidate lies within γ of each
/// input, which partitions the argument into its four structural cases;
/// the report counts how often each occurred. γ may be infinite, in which
/// case the check reduces to the plain triangle inequality.
pub fn check_sensitivity_lemma(
    space: &MetricSpace,
    gamma: f64,
) -> Result<SensitivityReport, VerifyError> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(VerifyError::InvalidGamma(gamma));
    }
    let m = space.len();
    if m > MAX_SENSITIVITY_VOCAB {
        return Err(VerifyError::DomainTooLarge {
            size: m,
            max: MAX_SENSITIVITY_VOCAB,
        });
    }
    let distances = distance_matrix(space)?;

    let per_candidate: Vec<(f64, Option<SensitivityWorst>, CaseCounts)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut counts = CaseCounts::default();
            let mut max_violation = f64::NEG_INFINITY;
            let mut worst = None;
            for w in 0..m {
                let within_w = distances[i][w] <= gamma;
                let f_w = -distances[i][w].min(gamma);
                for (w_prime, (&d_to_candidate, &d_between)) in
                    distances[i].iter().zip(&distances[w]).enumerate()
                {
                    let within_p = d_to_candidate <= gamma;
                    let f_p = -d_to_candidate.min(gamma);
                    let case = match (within_w, within_p) {
                        (true, true) => TruncationCase::BothWithin,
                        (true, false) => TruncationCase::OnlyFirstWithin,
                        (false, true) => TruncationCase::OnlySecondWithin,
                        (false, false) => TruncationCase::NeitherWithin,
                    };
                    counts.bump(case);
                    let violation = (f_w - f_p).abs() - d_between;
                    if violation > max_violation {
                        max_violation = violation;
                        worst = Some(SensitivityWorst {
                            candidate: i as u32,
                            w: w as u32,
                            w_prime: w_prime as u32,
                            case,
                            violation,
                        });
                    }
                }
            }
            (max_violation, worst, counts)
        })
        .collect();

    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    let mut case_counts = CaseCounts::default();
    for (violation, candidate_worst, counts) in per_candidate {
        case_counts.merge(&counts);
        if violation > max_violation {
            max_violation = violation;
            worst = candidate_worst;
        }
    }
    Ok(SensitivityReport {
        gamma,
        vocab: m,
        triples_checked: (m as u64).pow(3),
        max_violation,
        worst,
        case_counts,
        passed: max_violation <= EXACT_LOG_RATIO_TOLERANCE,
    })
}

// --- utility bound ---

/// Result of [`check_utility_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct UtilityReport {
    pub epsilon: f64,
    pub beta: f64,
    /// Radius calibrated from (epsilon, beta, |W|).
    pub gamma: f64,
    pub vocab: usize,
    /// Closed-form worst case for the mass escaping the candidate list:
    /// t / (1 + t) with t = (|W|-1) * exp(-eps*gamma/2). Equals beta at
    /// the calibrated gamma unless the radius clamped at zero.
    pub analytic_worst_outside_mass: f64,
    /// Oracle-summed within-list mass per input word.
    pub per_input_within_mass: Vec<f64>,
    pub min_within_mass: f64,
    pub worst_input: u32,
    pub passed: bool,
}

/// Calibrates γ for the requested deniability target β and verifies, by
/// exact oracle summation, that every input keeps at least 1-β of its
/// output mass inside its candidate list, and that the closed-form worst
/// case does not exceed β.
pub fn check_utility_bound(
    space: &MetricSpace,
    epsilon: f64,
    beta: f64,
) -> Result<UtilityReport, VerifyError> {
    let m = space.len();
    let gamma = calibrate_gamma(epsilon, beta, m)?;
    let params = PrivacyParams::new(epsilon, gamma)?;

    let per_input: Result<Vec<f64>, VerifyError> = (0..m as u32)
        .into_par_iter()
        .map(|w| {
            let set = range_query(space, WordId(w), gamma)?;
            let dist = tem_exact_distribution(&set, &params)?;
            Ok(set.members().iter().map(|(id, _)| dist.prob(*id)).sum())
        })
        .collect();
    let per_input = per_input?;

    let (worst_input, min_within_mass) =
        per_input
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |acc, (i, mass)| {
                if *mass < acc.1 {
                    (i, *mass)
                } else {
                    acc
                }
            });

    let t = (m as f64 - 1.0) * (-epsilon * gamma / 2.0).exp();
    let analytic = t / (1.0 + t);
    let passed = min_within_mass >= 1.0 - beta - EXACT_LOG_RATIO_TOLERANCE
        && analytic <= beta + EXACT_LOG_RATIO_TOLERANCE;
    Ok(UtilityReport {
        epsilon,
        beta,
        gamma,
        vocab: m,
        analytic_worst_outside_mass: analytic,
        per_input_within_mass: per_input,
        min_within_mass,
        worst_input: worst_input as u32,
        passed,
    })
}

// --- oracle route agreement ---

/// Result of [`check_aggregation_equivalence`].
#[derive(Debug, Clone, Serialize)]
pub struct AggregationReport {
    pub epsilon: f64,
    pub gamma: f64,
    pub vocab: usize,
    /// max over inputs and outputs of the pointwise probability gap
    /// between the flat oracle and the two-stage (fallback then uniform
    /// resolution) oracle.
    pub max_abs_prob_diff: f64,
    pub worst_input: u32,
    pub passed: bool,
}

/// Verifies that aggregating the outside words into one fallback candidate
/// and resolving it uniformly yields exactly the flat truncated-score
/// distribution, input by input, to [`ORACLE_AGREEMENT_TOLERANCE`].
pub fn check_aggregation_equivalence(
    space: &MetricSpace,
    params: &PrivacyParams,
) -> Result<AggregationReport, VerifyError> {
    let mut max_diff = 0.0f64;
    let mut worst_input = 0u32;
    for w in space.vocabulary().ids() {
        let set = range_query(space, w, params.gamma())?;
        let flat = tem_exact_distribution(&set, params)?;
        let staged = tem_exact_distribution_two_stage(&set, params)?;
        let diff = flat.max_abs_diff(&staged);
        if diff > max_diff {
            max_diff = diff;
            worst_input = w.0;
        }
    }
    Ok(AggregationReport {
        epsilon: params.epsilon(),
        gamma: params.gamma(),
        vocab: space.len(),
        max_abs_prob_diff: max_diff,
        worst_input,
        passed: max_diff <= ORACLE_AGREEMENT_TOLERANCE,
    })
}

// --- precomputed-index equivalence ---

/// Result of [`check_index_equivalence`].
#[derive(Debug, Clone, Serialize)]
pub struct IndexEquivalenceReport {
    pub epsilon: f64,
    pub gamma: f64,
    pub vocab: usize,
    pub samples_per_input: u64,
    /// max pointwise probability gap between the oracle over freshly
    /// scanned candidate sets and the oracle over the index's sets.
    pub max_abs_prob_diff: f64,
    /// Whether seeded sampling through both routes produced identical
    /// output sequences for every input.
    pub sampled_outputs_identical: bool,
    pub passed: bool,
}

/// Verifies a precomputed index against per-query scans: exact output
/// distributions must agree pointwise and seeded sampling must walk both
/// routes to identical outputs. Catches any divergence between build-time
/// and query-time candidate generation.
pub fn check_index_equivalence(
    space: &MetricSpace,
    params: &PrivacyParams,
    index: &TruncationIndex,
    seed: u64,
    samples_per_input: u64,
) -> Result<IndexEquivalenceReport, VerifyError> {
    if !index.matches_space(space) {
        return Err(VerifyError::Mechanism(MechanismError::IndexSpaceMismatch));
    }
    if index.gamma() != params.gamma() {
        return Err(VerifyError::Mechanism(MechanismError::GammaMismatch {
            set: index.gamma(),
            params: params.gamma(),
        }));
    }
    let root = RandomSource::new(seed);
    let mut max_diff = 0.0f64;
    let mut identical = true;
    for w in space.vocabulary().ids() {
        let scanned = range_query(space, w, params.gamma())?;
        let stored = index.candidate_set(w).expect("index covers the vocabulary");
        let dist_scan = tem_exact_distribution(&scanned, params)?;
        let dist_index = tem_exact_distribution(stored, params)?;
        max_diff = max_diff.max(dist_scan.max_abs_diff(&dist_index));

        let mut rng_scan = root.substream(u64::from(w.0));
        let mut rng_index = rng_scan.clone();
        for _ in 0..samples_per_input {
            let a = tem_privatize_word(&scanned, params, &mut rng_scan)?;
            let b = tem_privatize_word(stored, params, &mut rng_index)?;
            if a != b {
                identical = false;
            }
        }
    }
    Ok(IndexEquivalenceReport {
        epsilon: params.epsilon(),
        gamma: params.gamma(),
        vocab: space.len(),
        samples_per_input,
        max_abs_prob_diff: max_diff,
        sampled_outputs_identical: identical,
        passed: max_diff <= ORACLE_AGREEMENT_TOLERANCE && identical,
    })
}

/// [`check_index_equivalence`] against a freshly built index.
pub fn check_alg_equivalence(
    space: &MetricSpace,
    params: &PrivacyParams,
    seed: u64,
    samples_per_input: u64,
) -> Result<IndexEquivalenceReport, VerifyError> {
    let index = build_index(space, params.gamma())?;
    check_index_equivalence(space, params, &index, seed, samples_per_input)
}

// --- Monte Carlo certification ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McWorst {
    pub w: u32,
    pub w_prime: u32,
    pub output: u32,
    /// ln(lower_w(y)) - ln(upper_w'(y)) - eps*d(w,w'); positive certifies
    /// a violation at the configured confidence.
    pub margin: f64,
}

/// Result of [`check_metric_dp_monte_carlo`].
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub epsilon: f64,
    pub vocab: usize,
    pub trials_per_input: u64,
    pub alpha: f64,
    pub comparisons: u64,
    pub certified_violations: u64,
    pub worst: Option<McWorst>,
    pub violation_certified: bool,
    /// Contract wording: sampling can only ever certify violations.
    pub note: &'static str,
}

const MC_NOTE: &str = "no violation certified; a Monte Carlo pass is not a proof of privacy";

fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the boundary counts the bound is exact; don't let rounding leave
    // a stray e-19 lower bound on a bin that was never observed.
    let lower = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lower, upper)
}

/// Samples every input `trials` times and compares Wilson score intervals
/// at confidence 1-α across all ordered input pairs and outputs. A
/// violation is certified when the lower bound for P[M(w)=y] exceeds
/// exp(ε·d(w,w')) times the upper bound for P[M(w')=y]. Absence of
/// certified violations is reported with that exact meaning; it never
/// upgrades to a privacy proof.
pub fn check_metric_dp_monte_carlo<S>(
    space: &MetricSpace,
    epsilon: f64,
    trials: u64,
    alpha: f64,
    root: &RandomSource,
    sampler: S,
) -> Result<MonteCarloReport, VerifyError>
where
    S: Fn(WordId, &mut RandomSource) -> Result<WordId, MechanismError> + Sync,
{
    let m = space.len();
    if m > MAX_MONTE_CARLO_VOCAB {
        return Err(VerifyError::DomainTooLarge {
            size: m,
            max: MAX_MONTE_CARLO_VOCAB,
        });
    }
    if trials < MIN_MONTE_CARLO_TRIALS {
        return Err(VerifyError::TooFewTrials {
            got: trials,
            min: MIN_MONTE_CARLO_TRIALS,
        });
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(VerifyError::InvalidAlpha(alpha));
    }

    let counts: Result<Vec<Vec<u64>>, MechanismError> = (0..m as u32)
        .into_par_iter()
        .map(|w| {
            let mut rng = root.substream(u64::from(w));
            let mut row = vec![0u64; m];
            for _ in 0..trials {
                let y = sampler(WordId(w), &mut rng)?;
                row[y.index()] += 1;
            }
            Ok(row)
        })
        .collect();
    let counts = counts?;

    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let intervals: Vec<Vec<(f64, f64)>> = counts
        .iter()
        .map(|row| row.iter().map(|k| wilson_interval(*k, trials, z)).collect())
        .collect();
    let distances = distance_matrix(space)?;

    let mut comparisons = 0u64;
    let mut certified = 0u64;
    let mut worst: Option<McWorst> = None;
    for w in 0..m {
        for w_prime in 0..m {
            if w_prime == w {
                continue;
            }
            let budget = epsilon * distances[w][w_prime];
            for (y, (&(lower, _), &(_, upper))) in
                intervals[w].iter().zip(&intervals[w_prime]).enumerate()
            {
                comparisons += 1;
                if lower <= 0.0 {
                    continue;
                }
                let margin = lower.ln() - upper.ln() - budget;
                if margin > 0.0 {
                    certified += 1;
                }
                if worst.is_none_or(|cur| margin > cur.margin) {
                    worst = Some(McWorst {
                        w: w as u32,
                        w_prime: w_prime as u32,
                        output: y as u32,
                        margin,
                    });
                }
            }
        }
    }
    Ok(MonteCarloReport {
        epsilon,
        vocab: m,
        trials_per_input: trials,
        alpha,
        comparisons,
        certified_violations: certified,
        worst,
        violation_certified: certified > 0,
        note: MC_NOTE,
    })
}

// --- radial distribution of the vector-noise baseline ---

/// Result of [`check_madlib_radial`].
#[derive(Debug, Clone, Serialize)]
pub struct RadialReport {
    pub dim: usize,
    pub epsilon: f64,
    pub samples: u64,
    pub alpha: f64,
    pub ks_statistic: f64,
    pub critical_value: f64,
    pub passed: bool,
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    let mut sup = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let c = cdf(*x);
        sup = sup.max((c - i as f64 / n).abs());
        sup = sup.max((c - (i as f64 + 1.0) / n).abs());
    }
    sup
}

/// Asymptotic two-sided KS critical value at level alpha.
pub fn ks_critical_value(n: u64, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / (2.0 * n as f64)).sqrt()
}

/// CDF of Gamma(shape, rate) at x.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    GammaDist::new(shape, rate)
        .expect("positive shape and rate")
        .cdf(x)
}

/// Draws noise vectors and KS-tests their radii against the Gamma(dim,
/// rate ε) law the density factorization predicts. A systematic error in
/// the direction/radius decomposition shows up here at any dimension.
pub fn check_madlib_radial(
    dim: usize,
    epsilon: f64,
    samples: u64,
    alpha: f64,
    seed: u64,
) -> Result<RadialReport, VerifyError> {
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(VerifyError::InvalidAlpha(alpha));
    }
    let mut rng = RandomSource::new(seed);
    let mut radii = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        let z = crate::mechanisms::sample_exp_ball_noise(&mut rng, dim, epsilon)?;
        radii.push(z.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let stat = ks_statistic(&radii, |x| gamma_cdf(dim as f64, epsilon, x));
    let critical = ks_critical_value(samples, alpha);
    Ok(RadialReport {
        dim,
        epsilon,
        samples,
        alpha,
        ks_statistic: stat,
        critical_value: critical,
        passed: stat < critical,
    })
}

// --- aggregated suite ---

/// Deliberately broken implementations, used to demonstrate that the
/// checks can fail. Each mutation reroutes exactly one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Double the fallback candidate's aggregate weight in the exact
    /// oracle. Breaks the privacy proof where candidate lists differ
    /// between nearby inputs.
    TemBotWeight,
    /// Drop one candidate from one precomputed list, as an incomplete
    /// index build would.
    IndexDropCandidate,
    /// Replace the sampled mechanism with the identity function.
    IdentitySampler,
}

impl std::fmt::Display for Mutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mutation::TemBotWeight => "tem-bot-weight",
            Mutation::IndexDropCandidate => "index-drop-candidate",
            Mutation::IdentitySampler => "identity-sampler",
        })
    }
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tem-bot-weight" => Ok(Mutation::TemBotWeight),
            "index-drop-candidate" => Ok(Mutation::IndexDropCandidate),
            "identity-sampler" => Ok(Mutation::IdentitySampler),
            other => Err(format!(
                "unknown mutation `{other}` (expected tem-bot-weight, \
                 index-drop-candidate, or identity-sampler)"
            )),
        }
    }
}

/// Configuration for [`run_verification_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub trials: u64,
    pub alpha: f64,
    pub seed: u64,
    pub mutation: Option<Mutation>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            epsilon: 2.0,
            beta: 0.01,
            trials: 20_000,
            alpha: 0.01,
            seed: 0,
            mutation: None,
        }
    }
}

/// One check outcome in the common report shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub params: Value,
    pub passed: bool,
    pub worst_case: Value,
    pub stats: Value,
}

/// Aggregated result of a verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub mutation: Option<Mutation>,
    pub checks: Vec<CheckOutcome>,
}

/// The spaces a verification run uses when the caller does not supply
/// one: two hand-sized lines with known geometry and one small random
/// space.
pub fn builtin_spaces() -> Vec<(String, MetricSpace)> {
    vec![
        ("line3".to_string(), synth::line_space()),
        ("near-pair".to_string(), synth::near_pair_space()),
        ("random12".to_string(), synth::random_space(12, 12, 3, 4.0)),
    ]
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("reports serialize")
}

fn mutated_index(space: &MetricSpace, gamma: f64) -> Result<TruncationIndex, VerifyError> {
    let honest = build_index(space, gamma)?;
    let mut sets: Vec<CandidateSet> = (0..space.len() as u32)
        .map(|w| honest.candidate_set(WordId(w)).expect("covered").clone())
        .collect();
    // Drop the farthest non-input member of the first list that has one.
    let victim = sets
        .iter()
        .position(|s| s.member_count() >= 2)
        .expect("some candidate list has a second member");
    let keep: Vec<(WordId, f64)> = {
        let members = sets[victim].members();
        let drop_idx = members.len() - 1;
        members
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop_idx)
            .map(|(_, m)| *m)
            .collect()
    };
    sets[victim] = CandidateSet::from_parts(WordId(victim as u32), gamma, keep, space.len())?;
    Ok(TruncationIndex::from_candidate_sets(space, gamma, sets)?)
}

/// Runs every check against every space and aggregates the outcomes.
/// With a [`Mutation`] set, the affected check runs against the broken
/// implementation instead, so the suite is expected to fail; everything
/// else still runs honestly.
pub fn run_verification_suite(
    spaces: &[(String, MetricSpace)],
    config: &VerifyConfig,
) -> Result<SuiteReport, VerifyError> {
    let mut checks = Vec::new();

    for (name, space) in spaces {
        let m = space.len();
        let calibrated = calibrate_gamma(config.epsilon, config.beta, m)?;
        let diameter = space.diameter();

        // Sensitivity and exact DP across a radius battery.
        for gamma in [0.0, calibrated, diameter] {
            let report = check_sensitivity_lemma(space, gamma)?;
            checks.push(CheckOutcome {
                check: "sensitivity".to_string(),
                params: json!({ "space": name, "gamma": gamma }),
                passed: report.passed,
                worst_case: to_value(&report.worst),
                stats: to_value(&report),
            });

            let params = PrivacyParams::new(config.epsilon, gamma)?;
            let shift = match config.mutation {
                Some(Mutation::TemBotWeight) => std::f64::consts::LN_2,
                _ => 0.0,
            };
            let report = check_metric_dp_exact(space, config.epsilon, |w| {
                let set = range_query(space, w, gamma)?;
                exact_distribution_with_fallback_shift(&set, &params, shift)
            })?;
            checks.push(CheckOutcome {
                check: "dp-exact".to_string(),
                params: json!({
                    "space": name,
                    "epsilon": config.epsilon,
                    "gamma": gamma,
                    "mutation": config.mutation.filter(|m| *m == Mutation::TemBotWeight),
                }),
                passed: report.passed,
                worst_case: to_value(&report.worst),
                stats: to_value(&report),
            });
        }

        // Utility at the calibrated radius.
        let report = check_utility_bound(space, config.epsilon, config.beta)?;
        checks.push(CheckOutcome {
            check: "utility".to_string(),
            params: json!({ "space": name, "epsilon": config.epsilon, "beta": config.beta }),
            passed: report.passed,
            worst_case: json!({
                "worst_input": report.worst_input,
                "min_within_mass": report.min_within_mass,
            }),
            stats: to_value(&report),
        });

        // Oracle aggregation route agreement.
        let params = PrivacyParams::new(config.epsilon, calibrated)?;
        let report = check_aggregation_equivalence(space, &params)?;
        checks.push(CheckOutcome {
            check: "aggregation-equivalence".to_string(),
            params: json!({ "space": name, "epsilon": config.epsilon, "gamma": calibrated }),
            passed: report.passed,
            worst_case: json!({
                "worst_input": report.worst_input,
                "max_abs_prob_diff": report.max_abs_prob_diff,
            }),
            stats: to_value(&report),
        });

        // Precomputed-index equivalence, honest or mutated.
        let report = match config.mutation {
            Some(Mutation::IndexDropCandidate) => {
                let index = mutated_index(space, calibrated)?;
                check_index_equivalence(space, &params, &index, config.seed, 64)?
            }
            _ => check_alg_equivalence(space, &params, config.seed, 64)?,
        };
        checks.push(CheckOutcome {
            check: "index-equivalence".to_string(),
            params: json!({
                "space": name,
                "epsilon": config.epsilon,
                "gamma": calibrated,
                "mutation": config.mutation.filter(|m| *m == Mutation::IndexDropCandidate),
            }),
            passed: report.passed,
            worst_case: json!({
                "max_abs_prob_diff": report.max_abs_prob_diff,
                "sampled_outputs_identical": report.sampled_outputs_identical,
            }),
            stats: to_value(&report),
        });

        // Monte Carlo on the truncated mechanism.
        let root = RandomSource::new(config.seed).substream(1);
        let report = check_metric_dp_monte_carlo(
            space,
            config.epsilon,
            config.trials,
            config.alpha,
            &root,
            |w, rng| {
                let set = range_query(space, w, calibrated)?;
                tem_privatize_word(&set, &params, rng)
            },
        )?;
        checks.push(CheckOutcome {
            check: "dp-monte-carlo".to_string(),
            params: json!({
                "space": name,
                "mechanism": "tem",
                "epsilon": config.epsilon,
                "gamma": calibrated,
                "trials": config.trials,
                "alpha": config.alpha,
            }),
            passed: !report.violation_certified,
            worst_case: to_value(&report.worst),
            stats: to_value(&report),
        });

        // Monte Carlo on the baseline sampler, or the identity mutation.
        let root = RandomSource::new(config.seed).substream(2);
        let identity = config.mutation == Some(Mutation::IdentitySampler);
        let report = if identity {
            check_metric_dp_monte_carlo(
                space,
                config.epsilon,
                config.trials,
                config.alpha,
                &root,
                |w, _| Ok(w),
            )?
        } else {
            check_metric_dp_monte_carlo(
                space,
                config.epsilon,
                config.trials,
                config.alpha,
                &root,
                |w, rng| madlib_privatize_word(space, w, config.epsilon, rng),
            )?
        };
        checks.push(CheckOutcome {
            check: "dp-monte-carlo".to_string(),
            params: json!({
                "space": name,
                "mechanism": if identity { "identity" } else { "madlib" },
                "epsilon": config.epsilon,
                "trials": config.trials,
                "alpha": config.alpha,
                "mutation": config.mutation.filter(|m| *m == Mutation::IdentitySampler),
            }),
            passed: !report.violation_certified,
            worst_case: to_value(&report.worst),
            stats: to_value(&report),
        });
    }

    // The radial law of the baseline noise is space-independent.
    let report = check_madlib_radial(
        3,
        config.epsilon,
        config.trials.max(20_000),
        config.alpha,
        config.seed,
    )?;
    checks.push(CheckOutcome {
        check: "madlib-radial".to_string(),
        params: json!({
            "dim": 3,
            "epsilon": config.epsilon,
            "samples": report.samples,
            "alpha": config.alpha,
        }),
        passed: report.passed,
        worst_case: json!({ "ks_statistic": report.ks_statistic }),
        stats: to_value(&report),
    });

    Ok(SuiteReport {
        passed: checks.iter().all(|c| c.passed),
        mutation: config.mutation,
        checks,
    })
}
