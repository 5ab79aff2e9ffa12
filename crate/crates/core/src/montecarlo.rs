//! Seeded Monte-Carlo set measures over axis-aligned sampling boxes.
//!
//! Samples are split into fixed-size chunks with per-chunk derived seeds and
//! reduced in chunk order, so estimates are identical for any worker count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::GeometryError;
use crate::geometry::BoxDomain;
use crate::util::mix_seed;

/// Minimum sample count accepted by the estimators.
pub const MIN_SAMPLES: u64 = 10_000;
const CHUNK: u64 = 8_192;

/// A volume estimate with its binomial (or sample-variance) standard error.
#[derive(Debug, Clone, Copy)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    /// No sample hit the set: the estimate is 0 and untrustworthy.
    pub degenerate: bool,
}

/// Hit-rate times box volume for an indicator predicate.
pub fn monte_carlo_volume<P>(
    predicate: P,
    sampling_box: &BoxDomain,
    n_samples: u64,
    seed: u64,
) -> Result<VolumeEstimate, GeometryError>
where
    P: Fn(&DVector<f64>) -> bool + Sync,
{
    if n_samples < MIN_SAMPLES {
        return Err(GeometryError::TooFewSamples {
            min: MIN_SAMPLES,
            got: n_samples,
        });
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let hit_counts: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, c));
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            let mut hits = 0u64;
            for _ in lo..hi {
                let y = sampling_box.sample_uniform(&mut rng);
                if predicate(&y) {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    let hits: u64 = hit_counts.iter().sum();
    let volume = sampling_box.volume();
    let n = n_samples as f64;
    let p = hits as f64 / n;
    Ok(VolumeEstimate {
        estimate: p * volume,
        std_error: volume * (p * (1.0 - p) / n).sqrt(),
        samples: n_samples,
        degenerate: hits == 0,
    })
}

/// Generalization to a non-negative weight function (0 outside the set);
/// used for d-volumes of weighted images. Standard error comes from the
/// sample variance of the weights.
pub fn monte_carlo_weighted_volume<W>(
    weight: W,
    sampling_box: &BoxDomain,
    n_samples: u64,
    seed: u64,
) -> Result<VolumeEstimate, GeometryError>
where
    W: Fn(&DVector<f64>) -> f64 + Sync,
{
    if n_samples < MIN_SAMPLES {
        return Err(GeometryError::TooFewSamples {
            min: MIN_SAMPLES,
            got: n_samples,
        });
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, c));
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            let (mut s, mut s2, mut nz) = (0.0f64, 0.0f64, 0u64);
            for _ in lo..hi {
                let y = sampling_box.sample_uniform(&mut rng);
                let w = weight(&y);
                s += w;
                s2 += w * w;
                if w != 0.0 {
                    nz += 1;
                }
            }
            (s, s2, nz)
        })
        .collect();
    let (mut sum, mut sum_sq, mut nonzero) = (0.0f64, 0.0f64, 0u64);
    for (s, s2, nz) in partials {
        sum += s;
        sum_sq += s2;
        nonzero += nz;
    }
    let volume = sampling_box.volume();
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(VolumeEstimate {
        estimate: mean * volume,
        std_error: volume * (var / n).sqrt(),
        samples: n_samples,
        degenerate: nonzero == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;
    use crate::geometry::{in_strip_intersection, strip_sampling_box};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn rejects_tiny_sample_counts() {
        let b = BoxDomain::cube(1, 1.0);
        assert!(matches!(
            monte_carlo_volume(|_| true, &b, 100, 0),
            Err(GeometryError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn always_true_returns_exact_box_volume() {
        let b = BoxDomain::cube(3, 2.0);
        let est = monte_carlo_volume(|_| true, &b, 20_000, 1).unwrap();
        assert_abs_diff_eq!(est.estimate, 64.0, epsilon = 1e-12);
        assert_eq!(est.std_error, 0.0);
        assert!(!est.degenerate);
    }

    #[test]
    fn always_false_is_degenerate() {
        let b = BoxDomain::cube(2, 1.0);
        let est = monte_carlo_volume(|_| false, &b, 20_000, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert!(est.degenerate);
    }

    #[test]
    fn strip_intersection_length_matches_analytic_value() {
        // reference geometry: the strip intersection is [-2, 2], length 4
        let e = Embedding::from_matrix(DMatrix::from_column_slice(2, 1, &[0.5, 0.2])).unwrap();
        let b = BoxDomain::cube(1, 3.0);
        let est =
            monte_carlo_volume(|y| in_strip_intersection(y, &e), &b, 200_000, 7).unwrap();
        assert!(
            (est.estimate - 4.0).abs() <= 4.0 * est.std_error.max(1e-3),
            "estimate {} +- {}",
            est.estimate,
            est.std_error
        );
    }

    #[test]
    fn estimates_are_deterministic() {
        let e = Embedding::from_matrix(DMatrix::from_column_slice(2, 1, &[0.5, 0.2])).unwrap();
        let b = strip_sampling_box(&e);
        let a = monte_carlo_volume(|y| in_strip_intersection(y, &e), &b, 50_000, 3).unwrap();
        let c = monte_carlo_volume(|y| in_strip_intersection(y, &e), &b, 50_000, 3).unwrap();
        assert_eq!(a.estimate, c.estimate);
        assert_eq!(a.std_error, c.std_error);
    }

    #[test]
    fn weighted_estimator_matches_indicator_on_binary_weights() {
        let b = BoxDomain::cube(2, 1.0);
        let pred = |y: &DVector<f64>| y[0] > 0.0;
        let ind = monte_carlo_volume(pred, &b, 50_000, 11).unwrap();
        let wgt =
            monte_carlo_weighted_volume(|y| if pred(y) { 1.0 } else { 0.0 }, &b, 50_000, 11)
                .unwrap();
        assert_abs_diff_eq!(ind.estimate, wgt.estimate, epsilon = 1e-12);
        assert_abs_diff_eq!(ind.std_error, wgt.std_error, epsilon = 1e-9);
    }
}
