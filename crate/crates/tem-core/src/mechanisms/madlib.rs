//! Calibrated-noise baseline: perturb the embedding, then snap back to
//! the nearest vocabulary word.
//!
//! The noise density is proportional to exp(-ε·‖z‖) over R^n, which gives
//! ε-metric-DP for the perturbed vector by construction; the nearest-word
//! projection is post-processing and costs nothing. Sampling factorizes
//! into a uniform direction (a normalized Gaussian vector) and a radius
//! with density proportional to r^(n-1)·exp(-ε·r), i.e. Gamma(shape n,
//! rate ε).

use rand::Rng;
use rand_distr::{Distribution as _, Gamma, StandardNormal};

use super::MechanismError;
use crate::candidate_index::nearest_neighbor;
use crate::embedding_store::{MetricSpace, WordId};
use crate::rng::RandomSource;

/// Draws one noise vector with density proportional to exp(-ε·‖z‖).
pub fn sample_exp_ball_noise(
    rng: &mut RandomSource,
    dim: usize,
    epsilon: f64,
) -> Result<Vec<f64>, MechanismError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(MechanismError::InvalidEpsilon(epsilon));
    }
    assert!(dim >= 1, "noise dimension must be at least 1");

    // Direction: isotropic Gaussian, renormalized. A zero vector has
    // probability zero but floats can underflow, so redraw if it happens.
    let mut direction = vec![0.0f64; dim];
    loop {
        let mut norm_sq = 0.0;
        for component in direction.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *component = g;
            norm_sq += g * g;
        }
        if norm_sq > 0.0 {
            let norm = norm_sq.sqrt();
            for component in direction.iter_mut() {
                *component /= norm;
            }
            break;
        }
    }

    // Radius: Gamma(shape = dim, scale = 1/eps) has density
    // proportional to r^(dim-1) * exp(-eps * r).
    let gamma = Gamma::new(dim as f64, 1.0 / epsilon).expect("validated arguments");
    let radius = gamma.sample(rng);

    for component in direction.iter_mut() {
        *component *= radius;
    }
    Ok(direction)
}

/// Privatizes one word: adds exp(-ε·‖z‖) noise to its embedding and
/// returns the nearest vocabulary word to the perturbed point.
pub fn madlib_privatize_word(
    space: &MetricSpace,
    word: WordId,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<WordId, MechanismError> {
    let origin = space.vector(word)?;
    let noise = sample_exp_ball_noise(rng, space.dim(), epsilon)?;
    let point: Vec<f64> = origin.iter().zip(&noise).map(|(x, z)| x + z).collect();
    Ok(nearest_neighbor(space, &point)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn radii(dim: usize, epsilon: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RandomSource::new(seed);
        (0..n)
            .map(|_| {
                let z = sample_exp_ball_noise(&mut rng, dim, epsilon).unwrap();
                z.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .collect()
    }

    #[test]
    fn radius_mean_matches_gamma_moments() {
        // Gamma(shape n, rate eps) has mean n/eps and variance n/eps^2.
        for (dim, eps, want) in [(1, 1.0, 1.0), (2, 1.0, 2.0), (3, 2.0, 1.5)] {
            let rs = radii(dim, eps, 40_000, 100 + dim as u64);
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            let sigma = (dim as f64).sqrt() / eps / (rs.len() as f64).sqrt();
            assert!(
                (mean - want).abs() < 6.0 * sigma,
                "dim {dim} eps {eps}: mean radius {mean}, expected {want}"
            );
        }
    }

    #[test]
    fn directions_have_zero_mean() {
        let mut rng = RandomSource::new(202);
        let n = 20_000;
        let mut sums = [0.0f64; 3];
        for _ in 0..n {
            let z = sample_exp_ball_noise(&mut rng, 3, 1.0).unwrap();
            let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (s, x) in sums.iter_mut().zip(&z) {
                *s += x / norm;
            }
        }
        for s in sums {
            // Each unit-vector component has variance 1/3; six sigma.
            let bound = 6.0 * (1.0f64 / 3.0 / n as f64).sqrt();
            assert!(
                (s / n as f64).abs() < bound,
                "direction mean component {} exceeds {bound}",
                s / n as f64
            );
        }
    }

    #[test]
    fn one_dimensional_noise_is_laplace_like() {
        // In one dimension the density is eps/2 * exp(-eps|z|): mean
        // absolute value 1/eps.
        let rs = radii(1, 2.0, 40_000, 303);
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean |z| {mean}, expected 0.5");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let mut a = RandomSource::new(7);
        let mut b = RandomSource::new(7);
        for _ in 0..32 {
            assert_eq!(
                sample_exp_ball_noise(&mut a, 4, 1.5).unwrap(),
                sample_exp_ball_noise(&mut b, 4, 1.5).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_epsilon() {
        let mut rng = RandomSource::new(1);
        assert!(matches!(
            sample_exp_ball_noise(&mut rng, 2, 0.0),
            Err(MechanismError::InvalidEpsilon(_))
        ));
        assert!(matches!(
            sample_exp_ball_noise(&mut rng, 2, f64::NAN),
            Err(MechanismError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn huge_epsilon_returns_the_input_word() {
        let space = synth::random_space(44, 20, 3, 4.0);
        let mut rng = RandomSource::new(45);
        for id in space.vocabulary().ids() {
            for _ in 0..20 {
                let out = madlib_privatize_word(&space, id, 1e6, &mut rng).unwrap();
                assert_eq!(out, id);
            }
        }
    }

    #[test]
    fn small_epsilon_moves_words() {
        let space = synth::random_space(46, 20, 3, 4.0);
        let mut rng = RandomSource::new(47);
        let moved = (0..500)
            .filter(|_| {
                madlib_privatize_word(&space, WordId(0), 0.1, &mut rng).unwrap() != WordId(0)
            })
            .count();
        assert!(moved > 400, "only {moved}/500 outputs moved at eps=0.1");
    }
}
