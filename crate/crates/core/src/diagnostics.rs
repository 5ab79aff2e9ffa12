//! Independent geometric oracles and a self-test battery.
//!
//! Everything here deliberately avoids the production code paths it checks:
//! zonotope membership is re-decided through exhaustive vertex enumeration
//! and a 2-d convex hull, the enclosing box through sign-vector enumeration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::embedding::{Embedding, RowMode};
use crate::error::GeometryError;
use crate::geometry::{
    enclosing_half_widths, in_parallelotope_union, in_strip_intersection, in_zonotope, phi_preimage,
    BoxDomain, FEASIBILITY_TOL,
};
use crate::mappings::{gamma, phi};
use crate::montecarlo::monte_carlo_volume;
use crate::util::{binomial_capped, for_each_combination, mix_seed};

/// Brute-force enumeration limit: 2^D sign vectors.
const MAX_ORACLE_AMBIENT: usize = 20;

/// Andrew's monotone chain; returns the hull counter-clockwise.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| a[0] == b[0] && a[1] == b[1]);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance from a point to a convex polygon (counter-clockwise):
/// positive inside, negative outside, zero on the boundary.
pub fn signed_distance_to_hull(hull: &[[f64; 2]], p: [f64; 2]) -> f64 {
    if hull.len() < 3 {
        // degenerate hull: distance to the segment/point, never inside
        let d = hull
            .iter()
            .map(|v| ((v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        return -d;
    }
    let mut min_edge = f64::INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = (ex * ex + ey * ey).sqrt();
        // inward normal of a CCW edge is (-ey, ex) / len
        let dist = (-(ey) * (p[0] - a[0]) + ex * (p[1] - a[1])) / len;
        min_edge = min_edge.min(dist);
    }
    min_edge
}

/// Membership oracle for the zonotope by exhaustive vertex enumeration
/// (d <= 2 only): the hull of `B s` over all sign vectors `s`.
pub fn zonotope_membership_oracle(
    y: &DVector<f64>,
    e: &Embedding,
    tol: f64,
) -> Result<bool, GeometryError> {
    let ambient = e.ambient_dim();
    assert!(
        ambient <= MAX_ORACLE_AMBIENT,
        "oracle enumerates 2^D sign vectors; D too large"
    );
    match e.low_dim() {
        1 => {
            let w: f64 = e.b().row(0).iter().map(|v| v.abs()).sum();
            Ok(y[0].abs() <= w + tol)
        }
        2 => {
            let hull = zonogon_hull(e);
            Ok(signed_distance_to_hull(&hull, [y[0], y[1]]) >= -tol)
        }
        d => Err(GeometryError::DimensionMismatch {
            expected: 2,
            got: d,
        }),
    }
}

/// Hull of the planar zonotope, via all 2^D sign images of B.
pub fn zonogon_hull(e: &Embedding) -> Vec<[f64; 2]> {
    let ambient = e.ambient_dim();
    let b = e.b();
    let mut points = Vec::with_capacity(1usize << ambient);
    for mask in 0u32..(1u32 << ambient) {
        let mut p = [0.0f64; 2];
        for j in 0..ambient {
            let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            p[0] += b[(0, j)] * s;
            p[1] += b[(1, j)] * s;
        }
        points.push(p);
    }
    convex_hull_2d(&points)
}

/// Enclosing-box half-widths by brute force over all 2^D sign vectors.
pub fn enclosing_half_widths_oracle(e: &Embedding) -> DVector<f64> {
    let ambient = e.ambient_dim();
    assert!(ambient <= MAX_ORACLE_AMBIENT);
    let b = e.b();
    let d = e.low_dim();
    let mut widths = DVector::<f64>::zeros(d);
    for mask in 0u32..(1u32 << ambient) {
        for i in 0..d {
            let mut v = 0.0;
            for j in 0..ambient {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                v += b[(i, j)] * s;
            }
            if v > widths[i] {
                widths[i] = v;
            }
        }
    }
    widths
}

/// A D x 2 matrix with exactly orthonormal columns and equal row norms
/// sqrt(2/D): rows sqrt(2/D) (cos(pi i / D), sin(pi i / D)).
pub fn planar_equal_norm_matrix(ambient_dim: usize) -> DMatrix<f64> {
    assert!(ambient_dim >= 3);
    let scale = (2.0 / ambient_dim as f64).sqrt();
    DMatrix::from_fn(ambient_dim, 2, |i, j| {
        let angle = std::f64::consts::PI * i as f64 / ambient_dim as f64;
        scale * if j == 0 { angle.cos() } else { angle.sin() }
    })
}

/// Infinity-norm circumradius of the parallelotope union: the largest vertex
/// coordinate over all d-subsets and sign vectors. Exhaustive; requires
/// binom(D, d) <= 10^4.
pub fn parallelotope_union_radius(e: &Embedding) -> Result<f64, GeometryError> {
    let (ambient, d) = (e.ambient_dim(), e.low_dim());
    if binomial_capped(ambient, d, 10_000) > 10_000 {
        return Err(GeometryError::TooFewSamples {
            min: 10_000,
            got: binomial_capped(ambient, d, u64::MAX >> 1),
        });
    }
    let mut radius = 0.0f64;
    let mut singular = false;
    for_each_combination(ambient, d, |rows| {
        let sub = DMatrix::<f64>::from_fn(d, d, |r, c| e.a()[(rows[r], c)]);
        let lu = sub.lu();
        for mask in 0u32..(1u32 << d) {
            let rhs = DVector::<f64>::from_fn(d, |i, _| {
                if mask >> i & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            });
            match lu.solve(&rhs) {
                Some(v) => radius = radius.max(v.amax()),
                None => singular = true,
            }
        }
    });
    if singular {
        return Err(GeometryError::NoPreimage { residual: f64::NAN });
    }
    Ok(radius)
}

/// Local d-volume scaling factor of the embedded image at y: the Gram
/// determinant of the rows of A whose strip contains y, zero outside the
/// parallelotope union. Integrating it over the union gives the d-volume of
/// the embedded set.
pub fn embedded_image_volume_weight(y: &DVector<f64>, e: &Embedding) -> f64 {
    let d = e.low_dim();
    let image = e.a() * y;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut in_band = 0usize;
    for i in 0..e.ambient_dim() {
        if image[i].abs() <= 1.0 {
            in_band += 1;
            let row = e.a().row(i);
            for r in 0..d {
                for c in 0..d {
                    gram[(r, c)] += row[r] * row[c];
                }
            }
        }
    }
    if in_band < d {
        return 0.0;
    }
    gram.determinant().max(0.0).sqrt()
}

/// One self-test outcome.
#[derive(Debug, Clone)]
pub struct SelfTest {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

fn test(name: &str, passed: bool, details: String) -> SelfTest {
    SelfTest {
        name: name.to_string(),
        passed,
        details,
    }
}

/// Geometry self-test battery behind the `diagnose` subcommand: embedding
/// orthonormality, membership against the exhaustive oracle, the enclosing
/// box against sign enumeration, pre-image and back-projection round trips,
/// and Monte-Carlo volume ratios.
pub fn run_geometry_selftests(
    low_dim: usize,
    ambient_dim: usize,
    seed: u64,
    mc_samples: u64,
) -> Vec<SelfTest> {
    let mut out = Vec::new();

    // orthonormality across a small grid plus the requested sizes
    {
        let mut worst = 0.0f64;
        let mut cases = vec![(ambient_dim, low_dim)];
        cases.extend_from_slice(&[(25, 2), (100, 5), (500, 20)]);
        for (ambient, low) in cases {
            if low <= ambient {
                for mode in [RowMode::Gaussian, RowMode::Sphere] {
                    if let Ok(e) = Embedding::sample(ambient, low, seed, mode) {
                        worst = worst.max(e.orthonormality_defect());
                    }
                }
            }
        }
        out.push(test(
            "orthonormal-rows",
            worst <= 1e-10,
            format!("max |B B^T - I| = {worst:.3e}"),
        ));
    }

    // membership vs the exhaustive oracle (planar case)
    if low_dim == 2 && ambient_dim <= 12 {
        match Embedding::sample(ambient_dim, 2, mix_seed(seed, 1), RowMode::Gaussian) {
            Ok(e) => {
                let sbox = BoxDomain::symmetric(&(enclosing_half_widths(&e) * 1.2));
                let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 2));
                let mut disagreements = 0usize;
                let mut compared = 0usize;
                let hull = zonogon_hull(&e);
                for _ in 0..1_000 {
                    let y = sbox.sample_uniform(&mut rng);
                    let sd = signed_distance_to_hull(&hull, [y[0], y[1]]);
                    if sd.abs() <= 1e-6 {
                        continue; // boundary band: both answers acceptable
                    }
                    compared += 1;
                    if in_zonotope(&y, &e, FEASIBILITY_TOL) != (sd > 0.0) {
                        disagreements += 1;
                    }
                }
                out.push(test(
                    "membership-vs-oracle",
                    disagreements == 0,
                    format!("{disagreements} disagreements over {compared} points"),
                ));
            }
            Err(e) => out.push(test("membership-vs-oracle", false, e.to_string())),
        }
    }

    // enclosing box vs sign enumeration
    if ambient_dim <= 12 {
        match Embedding::sample(ambient_dim, low_dim, mix_seed(seed, 3), RowMode::Gaussian) {
            Ok(e) => {
                let fast = enclosing_half_widths(&e);
                let brute = enclosing_half_widths_oracle(&e);
                let defect = (fast - brute).amax();
                out.push(test(
                    "enclosing-box-vs-enumeration",
                    defect <= 1e-9,
                    format!("max deviation {defect:.3e}"),
                ));
            }
            Err(e) => out.push(test("enclosing-box-vs-enumeration", false, e.to_string())),
        }
    }

    // pre-image and back-projection round trips
    match Embedding::sample(ambient_dim, low_dim, mix_seed(seed, 4), RowMode::Gaussian) {
        Ok(e) => {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 5));
            let big = BoxDomain::cube(low_dim, 30.0);
            let mut worst_phi = 0.0f64;
            let mut failures = 0usize;
            for _ in 0..200 {
                let y_raw = big.sample_uniform(&mut rng);
                let x = phi(&y_raw, &e);
                match phi_preimage(&x, &e) {
                    Ok(y) => {
                        worst_phi = worst_phi.max((phi(&y, &e) - &x).amax());
                        if !in_parallelotope_union(&y, &e) {
                            failures += 1;
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            out.push(test(
                "preimage-round-trip",
                failures == 0 && worst_phi <= 1e-6,
                format!("{failures} failures, worst residual {worst_phi:.3e}"),
            ));

            let mut worst_gamma = 0.0f64;
            let mut gamma_failures = 0usize;
            for _ in 0..200 {
                let x = DVector::from_fn(ambient_dim, |_, _| rng.random_range(-1.0..1.0));
                let y = e.b() * &x;
                match gamma(&y, &e, FEASIBILITY_TOL) {
                    Ok(back) => worst_gamma = worst_gamma.max((e.b() * back - &y).amax()),
                    Err(_) => gamma_failures += 1,
                }
            }
            out.push(test(
                "back-projection-round-trip",
                gamma_failures == 0 && worst_gamma <= 1e-6,
                format!("{gamma_failures} failures, worst residual {worst_gamma:.3e}"),
            ));
        }
        Err(e) => out.push(test("round-trips", false, e.to_string())),
    }

    // Monte-Carlo volume ratio bound for the planar equal-row-norm matrix
    if low_dim == 2 && ambient_dim >= 3 {
        match Embedding::from_matrix(planar_equal_norm_matrix(ambient_dim)) {
            Ok(e) => {
                let zbox = BoxDomain::symmetric(&enclosing_half_widths(&e));
                let vol_z = monte_carlo_volume(
                    |y| in_zonotope(y, &e, FEASIBILITY_TOL),
                    &zbox,
                    mc_samples,
                    mix_seed(seed, 6),
                );
                let ibox = crate::geometry::strip_sampling_box(&e);
                let vol_i = monte_carlo_volume(
                    |y| in_strip_intersection(y, &e),
                    &ibox,
                    mc_samples,
                    mix_seed(seed, 7),
                );
                match (vol_z, vol_i) {
                    (Ok(vz), Ok(vi)) if !vz.degenerate && !vi.degenerate => {
                        let ratio = vz.estimate / vi.estimate;
                        let se = ratio
                            * ((vz.std_error / vz.estimate).powi(2)
                                + (vi.std_error / vi.estimate).powi(2))
                            .sqrt();
                        out.push(test(
                            "volume-ratio-bound",
                            ratio <= 2.0 + 3.0 * se,
                            format!("Vol(Z)/Vol(I) = {ratio:.4} (+- {se:.4})"),
                        ));
                    }
                    _ => out.push(test("volume-ratio-bound", false, "degenerate estimate".into())),
                }
            }
            Err(e) => out.push(test("volume-ratio-bound", false, e.to_string())),
        }
    }

    // exact sanity for the Monte-Carlo plumbing
    {
        let b = BoxDomain::cube(low_dim.max(1), 1.5);
        match monte_carlo_volume(|_| true, &b, 10_000, seed) {
            Ok(est) => {
                let exact = b.volume();
                out.push(test(
                    "mc-exact-box",
                    (est.estimate - exact).abs() <= 1e-12 && est.std_error == 0.0,
                    format!("estimate {} for volume {exact}", est.estimate),
                ));
            }
            Err(e) => out.push(test("mc-exact-box", false, e.to_string())),
        }
    }

    // minimal-set boundary on the hand-checkable 2x1 geometry
    {
        let e = Embedding::from_matrix(DMatrix::from_column_slice(2, 1, &[0.5, 0.2]))
            .expect("reference matrix");
        let boundary = bisect_union_boundary(&e, 4.0, 6.0, 1e-9);
        out.push(test(
            "minimal-set-boundary",
            (boundary - 5.0).abs() <= 1e-6,
            format!("located boundary at {boundary:.9}"),
        ));
    }

    out
}

/// Bisection for the outer boundary of the parallelotope union along the
/// positive axis of a 1-d embedding; assumes inside at `lo`, outside at `hi`.
pub fn bisect_union_boundary(e: &Embedding, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    debug_assert!(in_parallelotope_union(&DVector::from_vec(vec![lo]), e));
    debug_assert!(!in_parallelotope_union(&DVector::from_vec(vec![hi]), e));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if in_parallelotope_union(&DVector::from_vec(vec![mid]), e) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::convex_project;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hull_of_a_square() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [0.25, 0.75],
        ];
        let hull = convex_hull_2d(&pts);
        assert_eq!(hull.len(), 4);
        assert!(signed_distance_to_hull(&hull, [0.5, 0.5]) > 0.0);
        assert!(signed_distance_to_hull(&hull, [1.5, 0.5]) < 0.0);
        assert_abs_diff_eq!(signed_distance_to_hull(&hull, [0.5, 0.4]), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn oracle_agrees_with_membership_on_small_cases() {
        let e = Embedding::sample(6, 2, 3, RowMode::Gaussian).unwrap();
        let sbox = BoxDomain::symmetric(&(enclosing_half_widths(&e) * 1.1));
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let hull = zonogon_hull(&e);
        let mut compared = 0;
        for _ in 0..500 {
            let y = sbox.sample_uniform(&mut rng);
            let sd = signed_distance_to_hull(&hull, [y[0], y[1]]);
            if sd.abs() <= 1e-6 {
                continue;
            }
            compared += 1;
            assert_eq!(
                in_zonotope(&y, &e, FEASIBILITY_TOL),
                zonotope_membership_oracle(&y, &e, FEASIBILITY_TOL).unwrap(),
                "disagreement at signed distance {sd}"
            );
        }
        assert!(compared > 300);
    }

    #[test]
    fn planar_matrix_properties_are_exact() {
        for ambient in [3, 5, 30] {
            let a = planar_equal_norm_matrix(ambient);
            let gram = a.transpose() * &a;
            assert_abs_diff_eq!(gram[(0, 0)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gram[(1, 1)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gram[(0, 1)], 0.0, epsilon = 1e-12);
            let target = (2.0 / ambient as f64).sqrt();
            for i in 0..ambient {
                assert_abs_diff_eq!(a.row(i).norm(), target, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn union_radius_bounds_the_union() {
        let e = Embedding::sample(6, 2, 9, RowMode::Gaussian).unwrap();
        let r = parallelotope_union_radius(&e).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let sbox = BoxDomain::cube(2, 2.0 * r);
        for _ in 0..2_000 {
            let y = sbox.sample_uniform(&mut rng);
            if in_parallelotope_union(&y, &e) {
                assert!(y.amax() <= r + 1e-9);
            }
        }
    }

    #[test]
    fn image_volume_weight_is_bounded_for_orthonormal_columns() {
        let e = Embedding::from_matrix(planar_equal_norm_matrix(5)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let sbox = BoxDomain::cube(2, 4.0);
        for _ in 0..1_000 {
            let y = sbox.sample_uniform(&mut rng);
            let w = embedded_image_volume_weight(&y, &e);
            assert!((0.0..=1.0 + 1e-12).contains(&w));
            if in_strip_intersection(&y, &e) {
                // no clamping: full Jacobian
                assert_abs_diff_eq!(w, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn selftests_pass_on_defaults() {
        let results = run_geometry_selftests(2, 5, 12345, 20_000);
        for t in &results {
            assert!(t.passed, "{}: {}", t.name, t.details);
        }
    }

    #[test]
    fn preimage_of_projected_points_lands_in_union() {
        let e = Embedding::sample(10, 3, 77, RowMode::Gaussian).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..200 {
            // points of the embedded set via gamma of zonotope points
            let x = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let y = e.b() * &x;
            let g = gamma(&y, &e, FEASIBILITY_TOL).unwrap();
            let pre = phi_preimage(&convex_project(&g), &e).unwrap();
            assert!(in_parallelotope_union(&pre, &e));
        }
    }
}
