//! Expected improvement, its penalized extension outside the zonotope, the
//! derivative-free acquisition maximizer, and space-filling initial designs.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::function::erf::erfc;

use crate::error::{EngineError, GpError};
use crate::geometry::BoxDomain;
use crate::gp::GpModel;
use crate::mappings::MappingKind;
use crate::util::mix_seed;

/// Predictive deviations below this count as deterministic.
const EI_ZERO_SD: f64 = 1e-12;

fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Closed-form expected improvement over the incumbent minimum.
pub fn expected_improvement(model: &GpModel, y: &DVector<f64>) -> Result<f64, GpError> {
    let (mean, variance) = model.predict(y)?;
    let f_min = model.f_min();
    let sd = variance.sqrt();
    if sd <= EI_ZERO_SD {
        return Ok((f_min - mean).max(0.0));
    }
    let u = (f_min - mean) / sd;
    Ok((f_min - mean) * normal_cdf(u) + sd * normal_pdf(u))
}

/// Expected improvement extended to the whole enclosing box: the criterion
/// inside the zonotope, and the penalty -||y|| outside, which pushes
/// acquisition search back toward the domain.
pub fn ei_ext(model: &GpModel, y: &DVector<f64>) -> Result<f64, GpError> {
    match model.mapping() {
        MappingKind::Gamma { domain } => {
            if domain.contains(y, model.feasibility_tol()) {
                expected_improvement(model, y)
            } else {
                Ok(-y.norm())
            }
        }
        MappingKind::Phi { .. } => expected_improvement(model, y),
    }
}

/// Result of one acquisition maximization.
#[derive(Debug, Clone)]
pub struct AcquisitionOutcome {
    pub point: DVector<f64>,
    pub value: f64,
    /// Fraction of criterion probes that landed outside the zonotope
    /// (always 0 in phi mode); a diagnostic for wasted restart effort.
    pub outside_fraction: f64,
}

/// Maximizes the acquisition over the mapping's search box with pattern
/// search from space-filling restarts. In gamma mode the returned point is
/// guaranteed to pass the zonotope membership test.
pub fn maximize_acquisition(
    model: &GpModel,
    restarts: usize,
    seed: u64,
) -> Result<AcquisitionOutcome, EngineError> {
    let domain = model.mapping().search_box();
    let mut probes = 0u64;
    let mut outside = 0u64;
    let tol = model.feasibility_tol();

    let in_domain = |y: &DVector<f64>| match model.mapping() {
        MappingKind::Gamma { domain } => domain.contains(y, tol),
        MappingKind::Phi { .. } => true,
    };

    let restarts = restarts.max(1);
    let starts = latin_hypercube(&domain, restarts, mix_seed(seed, 0xAC));
    let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(starts.len());
    for s in starts {
        let v = ei_ext(model, &s)?;
        probes += 1;
        if v < 0.0 || !in_domain(&s) {
            outside += 1;
        }
        scored.push((v, s));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let searches = scored.len().min(10).max(1);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_point: Option<DVector<f64>> = None;
    for (v0, start) in scored.into_iter().take(searches) {
        let (point, value, stats) = pattern_search(model, &domain, start, v0)?;
        probes += stats.0;
        outside += stats.1;
        if value > best_val && in_domain(&point) {
            best_val = value;
            best_point = Some(point);
        }
    }

    // all searches ended outside the domain: fall back to the best of a
    // design-style feasible sample
    let point = match best_point {
        Some(p) => p,
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 0xFB));
            let mut fallback: Option<(f64, DVector<f64>)> = None;
            for _ in 0..10_000 {
                let c = domain.sample_uniform(&mut rng);
                if in_domain(&c) {
                    let v = ei_ext(model, &c)?;
                    if fallback.as_ref().is_none_or(|(fv, _)| v > *fv) {
                        fallback = Some((v, c));
                    }
                }
            }
            match fallback {
                Some((v, p)) => {
                    best_val = v;
                    p
                }
                None => {
                    // pathological: project a hypercube sample into the domain
                    let e = model.embedding();
                    let x = DVector::from_fn(e.ambient_dim(), |_, _| {
                        rng.random_range(-1.0..1.0)
                    });
                    let y = e.b() * x;
                    best_val = ei_ext(model, &y)?;
                    y
                }
            }
        }
    };
    Ok(AcquisitionOutcome {
        point,
        value: best_val,
        outside_fraction: if probes == 0 {
            0.0
        } else {
            outside as f64 / probes as f64
        },
    })
}

/// Coordinate-wise pattern search with shrinking steps; derivative-free
/// because the extended criterion is non-smooth at the zonotope boundary.
fn pattern_search(
    model: &GpModel,
    domain: &BoxDomain,
    mut point: DVector<f64>,
    mut value: f64,
) -> Result<(DVector<f64>, f64, (u64, u64)), EngineError> {
    let dim = domain.dim();
    let half_widths: Vec<f64> = (0..dim)
        .map(|i| 0.5 * (domain.upper()[i] - domain.lower()[i]))
        .collect();
    let probe_budget = 400 * dim as u64;
    let mut probes = 0u64;
    let mut outside = 0u64;
    let mut scale = 0.25;
    while scale > 1e-4 && probes < probe_budget {
        let mut improved_at_scale = false;
        // sweep coordinates until a full sweep yields no improvement
        loop {
            let mut improved = false;
            for k in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut trial = point.clone();
                    trial[k] = (trial[k] + sign * scale * half_widths[k])
                        .clamp(domain.lower()[k], domain.upper()[k]);
                    if trial[k] == point[k] {
                        continue;
                    }
                    let v = ei_ext(model, &trial)?;
                    probes += 1;
                    if v < 0.0 {
                        outside += 1;
                    }
                    if v > value {
                        value = v;
                        point = trial;
                        improved = true;
                        improved_at_scale = true;
                        break;
                    }
                }
            }
            if !improved || probes >= probe_budget {
                break;
            }
        }
        if !improved_at_scale {
            scale *= 0.5;
        } else {
            // keep the scale one more round after progress
            scale *= 0.8;
        }
    }
    Ok((point, value, (probes, outside)))
}

/// Outcome of initial-design construction.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub points: Vec<DVector<f64>>,
    /// Rejection sampling starved and the design fell back to projecting
    /// hypercube samples through B (feasible but not uniform).
    pub used_projection_fallback: bool,
}

/// Space-filling design of n0 points inside the mapping's domain: a large
/// candidate set (Latin hypercube for the box domain, accepted uniform draws
/// for the zonotope) thinned by greedy maximin selection.
pub fn initial_design(
    n0: usize,
    mapping: &MappingKind,
    tol: f64,
    seed: u64,
) -> Result<DesignOutcome, EngineError> {
    if n0 < 2 {
        return Err(EngineError::InvalidConfig(format!(
            "initial design needs at least 2 points, got {n0}"
        )));
    }
    let domain = mapping.search_box();
    let target_candidates = (50 * n0).max(1_000);
    let mut used_projection_fallback = false;

    let candidates: Vec<DVector<f64>> = match mapping {
        MappingKind::Phi { .. } => latin_hypercube(&domain, target_candidates, mix_seed(seed, 0xD0)),
        MappingKind::Gamma { domain: zonotope } => {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 0xD1));
            let mut accepted = Vec::with_capacity(target_candidates);
            let mut tried = 0u64;
            while accepted.len() < target_candidates && tried < 1_000_000 {
                let c = domain.sample_uniform(&mut rng);
                tried += 1;
                if zonotope.contains(&c, tol) {
                    accepted.push(c);
                }
            }
            // acceptance below 0.1%: draw feasible points through B instead
            if accepted.len() < n0.max((tried / 1_000) as usize) {
                used_projection_fallback = true;
                let e = zonotope.embedding();
                accepted.clear();
                for _ in 0..target_candidates {
                    let x = DVector::from_fn(e.ambient_dim(), |_, _| {
                        rng.random_range(-1.0..1.0)
                    });
                    accepted.push(e.b() * x);
                }
            }
            accepted
        }
    };
    if candidates.len() < n0 {
        return Err(EngineError::InvalidConfig(format!(
            "could not generate {n0} feasible design candidates"
        )));
    }
    Ok(DesignOutcome {
        points: maximin_select(candidates, n0),
        used_projection_fallback,
    })
}

/// Greedy maximin thinning: seed with the farthest pair, then repeatedly add
/// the candidate with the largest distance to the chosen set.
fn maximin_select(candidates: Vec<DVector<f64>>, n0: usize) -> Vec<DVector<f64>> {
    if candidates.len() <= n0 {
        return candidates;
    }
    let m = candidates.len();
    let (mut best_i, mut best_j, mut best_d) = (0, 1, -1.0f64);
    for i in 0..m {
        for j in (i + 1)..m {
            let d = (&candidates[i] - &candidates[j]).norm_squared();
            if d > best_d {
                best_d = d;
                best_i = i;
                best_j = j;
            }
        }
    }
    let mut chosen_idx = vec![best_i, best_j];
    let mut min_dist: Vec<f64> = (0..m)
        .map(|i| {
            let a = (&candidates[i] - &candidates[best_i]).norm_squared();
            let b = (&candidates[i] - &candidates[best_j]).norm_squared();
            a.min(b)
        })
        .collect();
    while chosen_idx.len() < n0 {
        let mut next = 0;
        let mut next_d = -1.0;
        for i in 0..m {
            if !chosen_idx.contains(&i) && min_dist[i] > next_d {
                next_d = min_dist[i];
                next = i;
            }
        }
        chosen_idx.push(next);
        for i in 0..m {
            let d = (&candidates[i] - &candidates[next]).norm_squared();
            min_dist[i] = min_dist[i].min(d);
        }
    }
    chosen_idx.into_iter().map(|i| candidates[i].clone()).collect()
}

/// Latin-hypercube sample over a box: stratified per coordinate with
/// independently shuffled strata.
pub fn latin_hypercube(domain: &BoxDomain, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dim = domain.dim();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for k in 0..dim {
        let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
        let mut vals: Vec<f64> = (0..count)
            .map(|s| {
                let u: f64 = rng.random();
                lo + (s as f64 + u) / count as f64 * (hi - lo)
            })
            .collect();
        for i in (1..count).rev() {
            let j = rng.random_range(0..=i);
            vals.swap(i, j);
        }
        columns.push(vals);
    }
    (0..count)
        .map(|i| DVector::from_fn(dim, |k, _| columns[k][i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedding, RowMode};
    use crate::geometry::FEASIBILITY_TOL;
    use crate::kernel::{KernelFamily, KernelSpec, Lengthscales, Warp};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn phi_model(obs: &[(DVector<f64>, f64)], theta: f64) -> GpModel {
        let e = Arc::new(Embedding::sample(6, 2, 4, RowMode::Gaussian).unwrap());
        let m = MappingKind::phi_default(&e);
        let spec = KernelSpec::new(
            KernelFamily::SquaredExponential,
            Warp::None,
            Lengthscales::Isotropic(theta),
            1.0,
            1e-8,
        )
        .unwrap();
        GpModel::with_fixed_hyperparameters(obs, &spec, &e, &m, Some(0.0)).unwrap()
    }

    #[test]
    fn ei_closed_form_reference_points() {
        // at the incumbent with unit posterior sd, EI = pdf(0)
        let obs = vec![(DVector::from_vec(vec![0.0, 0.0]), 0.0)];
        let model = phi_model(&obs, 0.5);
        // far from data: mean = trend = 0 = f_min, sd ~ 1
        let far = DVector::from_vec(vec![1.4, -1.4]);
        let ei = expected_improvement(&model, &far).unwrap();
        assert_abs_diff_eq!(ei, 0.3989422804014327, epsilon = 1e-3);
        assert_abs_diff_eq!(ei, 0.398942, epsilon = 1e-2);
    }

    #[test]
    fn ei_is_zero_when_no_improvement_is_possible() {
        // deterministic prediction above the incumbent
        let obs = vec![
            (DVector::from_vec(vec![0.0, 0.0]), 1.0),
            (DVector::from_vec(vec![0.9, 0.9]), 0.0),
        ];
        let model = phi_model(&obs, 0.6);
        // at the worse training point the posterior is (1.0, ~0)
        let ei = expected_improvement(&model, &DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert!(ei.abs() < 1e-6);
    }

    #[test]
    fn ei_lower_bounds() {
        let obs = vec![
            (DVector::from_vec(vec![0.2, -0.1]), 0.4),
            (DVector::from_vec(vec![-0.6, 0.8]), -0.3),
        ];
        let model = phi_model(&obs, 0.8);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let domain = model.mapping().search_box();
        for _ in 0..200 {
            let y = domain.sample_uniform(&mut rng);
            let (mean, _) = model.predict(&y).unwrap();
            let ei = expected_improvement(&model, &y).unwrap();
            assert!(ei >= 0.0);
            assert!(ei >= model.f_min() - mean - 1e-12);
        }
    }

    fn gamma_model() -> GpModel {
        let e = Arc::new(Embedding::sample(8, 2, 21, RowMode::Gaussian).unwrap());
        let m = MappingKind::gamma(e.clone());
        let spec = KernelSpec::new(
            KernelFamily::Matern52,
            Warp::None,
            Lengthscales::Isotropic(1.0),
            1.0,
            1e-8,
        )
        .unwrap();
        let obs = vec![
            (DVector::from_vec(vec![0.0, 0.0]), 0.5),
            (DVector::from_vec(vec![0.2, -0.1]), -0.2),
        ];
        GpModel::with_fixed_hyperparameters(&obs, &spec, &e, &m, Some(0.0)).unwrap()
    }

    #[test]
    fn ei_ext_penalizes_points_outside_the_zonotope() {
        let model = gamma_model();
        // far corner of the enclosing box scaled out: way outside
        let far = DVector::from_vec(vec![50.0, -40.0]);
        let v = ei_ext(&model, &far).unwrap();
        assert_abs_diff_eq!(v, -far.norm(), epsilon = 1e-12);
        // inside: matches EI
        let inside = DVector::from_vec(vec![0.1, 0.1]);
        assert_abs_diff_eq!(
            ei_ext(&model, &inside).unwrap(),
            expected_improvement(&model, &inside).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ei_ext_decreases_along_rays_outside() {
        let model = gamma_model();
        let dir = DVector::from_vec(vec![1.0, 0.7]).normalize();
        let mut last_outside: Option<f64> = None;
        for t in [5.0, 8.0, 12.0, 20.0] {
            let y = t * &dir;
            let v = ei_ext(&model, &y).unwrap();
            if v < 0.0 {
                if let Some(prev) = last_outside {
                    assert!(v < prev);
                }
                last_outside = Some(v);
            }
        }
        assert!(last_outside.is_some());
    }

    #[test]
    fn maximizer_dominates_probe_grid() {
        let obs = vec![(DVector::from_vec(vec![0.3, 0.4]), -1.0)];
        let model = phi_model(&obs, 1.5);
        let out = maximize_acquisition(&model, 10, 7).unwrap();
        let domain = model.mapping().search_box();
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..1_000 {
            let y = domain.sample_uniform(&mut rng);
            let v = expected_improvement(&model, &y).unwrap();
            assert!(out.value >= v - 1e-9, "probe beat the maximizer: {v} > {}", out.value);
        }
    }

    #[test]
    fn more_restarts_never_hurt() {
        let obs = vec![
            (DVector::from_vec(vec![0.3, 0.4]), -1.0),
            (DVector::from_vec(vec![-0.8, 0.1]), 0.7),
        ];
        let model = phi_model(&obs, 0.4);
        let one = maximize_acquisition(&model, 1, 99).unwrap();
        let twenty = maximize_acquisition(&model, 20, 99).unwrap();
        assert!(twenty.value >= one.value - 1e-12);
    }

    #[test]
    fn gamma_maximizer_returns_feasible_points() {
        let model = gamma_model();
        let out = maximize_acquisition(&model, 12, 5).unwrap();
        match model.mapping() {
            MappingKind::Gamma { domain } => {
                assert!(domain.contains(&out.point, FEASIBILITY_TOL))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn phi_design_is_space_filling_in_the_default_box() {
        let e = Arc::new(Embedding::sample(10, 2, 2, RowMode::Gaussian).unwrap());
        let mapping = MappingKind::phi_default(&e);
        let design = initial_design(6, &mapping, FEASIBILITY_TOL, 11).unwrap();
        assert_eq!(design.points.len(), 6);
        assert!(!design.used_projection_fallback);
        let bound = 2.0f64.sqrt();
        for p in &design.points {
            assert!(p.amax() <= bound + 1e-12);
        }
    }

    #[test]
    fn gamma_design_points_pass_membership() {
        let e = Arc::new(Embedding::sample(12, 3, 8, RowMode::Gaussian).unwrap());
        let mapping = MappingKind::gamma(e.clone());
        let design = initial_design(8, &mapping, FEASIBILITY_TOL, 3).unwrap();
        assert_eq!(design.points.len(), 8);
        for p in &design.points {
            assert!(crate::geometry::in_zonotope(p, &e, FEASIBILITY_TOL));
        }
    }

    #[test]
    fn one_dimensional_maximin_pair_spans_half_the_domain() {
        let e = Arc::new(Embedding::sample(2, 1, 5, RowMode::Gaussian).unwrap());
        let mapping = MappingKind::phi_default(&e);
        let design = initial_design(2, &mapping, FEASIBILITY_TOL, 17).unwrap();
        let width = 2.0; // [-1, 1]
        let dist = (&design.points[0] - &design.points[1]).norm();
        assert!(dist >= 0.5 * width, "distance {dist}");
    }

    #[test]
    fn design_rejects_degenerate_sizes() {
        let e = Arc::new(Embedding::sample(4, 2, 5, RowMode::Gaussian).unwrap());
        let mapping = MappingKind::phi_default(&e);
        assert!(initial_design(1, &mapping, FEASIBILITY_TOL, 0).is_err());
    }

    #[test]
    fn designs_are_deterministic() {
        let e = Arc::new(Embedding::sample(9, 2, 31, RowMode::Gaussian).unwrap());
        let mapping = MappingKind::gamma(e);
        let a = initial_design(5, &mapping, FEASIBILITY_TOL, 77).unwrap();
        let b = initial_design(5, &mapping, FEASIBILITY_TOL, 77).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p, q);
        }
    }
}
