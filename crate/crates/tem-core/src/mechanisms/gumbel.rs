//! Gumbel noise for the selection step.
//!
//! Adding independent Gumbel(0, s) noise to scores f_i and taking the
//! argmax samples candidate i with probability proportional to
//! exp(f_i / s). With s = 2/ε this realizes the exponential mechanism
//! over the candidate scores in one pass, without normalizing constants.

use crate::rng::RandomSource;

/// Inverse-transform Gumbel(0, scale) sample from a uniform u in (0, 1).
pub fn gumbel_from_uniform(u: f64, scale: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0, "uniform draw must be in (0, 1)");
    -scale * (-(u.ln())).ln()
}

/// Draws one Gumbel(0, scale) variate. The draw consumes exactly one
/// uniform from the source, which keeps stream accounting simple for the
/// mechanisms layered on top.
pub fn sample_gumbel(rng: &mut RandomSource, scale: f64) -> f64 {
    assert!(
        scale > 0.0 && scale.is_finite(),
        "Gumbel scale must be positive and finite"
    );
    gumbel_from_uniform(rng.uniform_open01(), scale)
}
