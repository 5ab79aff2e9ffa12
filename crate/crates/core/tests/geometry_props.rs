//! Property tests for the low-dimensional geometry: set nesting, symmetry,
//! minimality and star-shapedness of the parallelotope union, and agreement
//! with exhaustive oracles on small instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use rembo_core::diagnostics::{signed_distance_to_hull, zonogon_hull};
use rembo_core::embedding::{convex_project, Embedding, RowMode};
use rembo_core::geometry::{
    enclosing_half_widths, in_parallelotope_union, in_strip_intersection, in_zonotope,
    phi_preimage, strip_sampling_box, BoxDomain, ZonotopeDomain, FEASIBILITY_TOL,
};
use rembo_core::mappings::{gamma, phi};

#[test]
fn nesting_intersection_union_and_box() {
    let e = Embedding::sample(20, 3, 101, RowMode::Gaussian).unwrap();
    let domain = ZonotopeDomain::new(Arc::new(e.clone()));
    let widths = enclosing_half_widths(&e);
    let sbox = strip_sampling_box(&e);
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut inside_any = 0;
    for _ in 0..10_000 {
        let y = sbox.sample_uniform(&mut rng);
        if in_strip_intersection(&y, &e) {
            inside_any += 1;
            assert!(in_parallelotope_union(&y, &e));
        }
        if domain.contains(&y, FEASIBILITY_TOL) {
            for i in 0..y.len() {
                assert!(y[i].abs() <= widths[i] + FEASIBILITY_TOL);
            }
        }
    }
    assert!(inside_any > 10, "sampling box failed to cover the intersection");
}

#[test]
fn central_symmetry_of_union_and_zonotope() {
    let e = Embedding::sample(15, 2, 5, RowMode::Gaussian).unwrap();
    let sbox = BoxDomain::symmetric(&(enclosing_half_widths(&e) * 1.3));
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for _ in 0..2_000 {
        let y = sbox.sample_uniform(&mut rng);
        assert_eq!(
            in_zonotope(&y, &e, FEASIBILITY_TOL),
            in_zonotope(&(-&y), &e, FEASIBILITY_TOL)
        );
        assert_eq!(
            in_parallelotope_union(&y, &e),
            in_parallelotope_union(&(-&y), &e)
        );
    }
}

#[test]
fn union_is_minimal_preimage_cover() {
    // points of the embedded set have pre-images inside the union, and the
    // image of any outside point is reachable from inside the union
    for (low, ambient, seed) in [(2usize, 5usize, 11u64), (3, 10, 13)] {
        let e = Embedding::sample(ambient, low, seed, RowMode::Gaussian).unwrap();
        let big = BoxDomain::cube(low, 40.0);
        let mut rng = ChaCha12Rng::seed_from_u64(seed + 1);
        for _ in 0..1_000 {
            let y_raw = big.sample_uniform(&mut rng);
            let x = phi(&y_raw, &e);
            let pre = phi_preimage(&x, &e).expect("embedded point must have a pre-image");
            assert!(in_parallelotope_union(&pre, &e));
            assert!((phi(&pre, &e) - &x).amax() <= 1e-6);
            if !in_parallelotope_union(&y_raw, &e) {
                // the outside point's image is covered from inside the union
                assert!((phi(&pre, &e) - phi(&y_raw, &e)).amax() <= 1e-6);
            }
        }
    }
}

#[test]
fn union_is_star_shaped_from_the_intersection() {
    let e = Embedding::sample(12, 2, 23, RowMode::Gaussian).unwrap();
    let sbox = strip_sampling_box(&e);
    let mut rng = ChaCha12Rng::seed_from_u64(29);
    let mut centers = Vec::new();
    while centers.len() < 20 {
        let c = sbox.sample_uniform(&mut rng);
        if in_strip_intersection(&c, &e) {
            centers.push(c);
        }
    }
    let ubox = BoxDomain::cube(2, 60.0);
    let mut tested = 0;
    while tested < 200 {
        let y = ubox.sample_uniform(&mut rng);
        if !in_parallelotope_union(&y, &e) {
            continue;
        }
        tested += 1;
        for c in &centers {
            for k in 1..=10 {
                let t = k as f64 / 11.0;
                let point = t * &y + (1.0 - t) * c;
                assert!(
                    in_parallelotope_union(&point, &e),
                    "segment to an intersection point left the union"
                );
            }
        }
    }
}

#[test]
fn membership_agrees_with_hull_oracle_on_small_cases() {
    // exhaustive-oracle agreement at d = 2 for several small ambient sizes
    for (ambient, seed) in [(4usize, 1u64), (5, 2), (6, 3)] {
        let e = Embedding::sample(ambient, 2, seed, RowMode::Gaussian).unwrap();
        let hull = zonogon_hull(&e);
        let sbox = BoxDomain::symmetric(&(enclosing_half_widths(&e) * 1.15));
        let mut rng = ChaCha12Rng::seed_from_u64(seed + 100);
        let mut compared = 0;
        for _ in 0..1_000 {
            let y = sbox.sample_uniform(&mut rng);
            let sd = signed_distance_to_hull(&hull, [y[0], y[1]]);
            if sd.abs() <= 1e-7 {
                continue;
            }
            compared += 1;
            assert_eq!(
                in_zonotope(&y, &e, FEASIBILITY_TOL),
                sd > 0.0,
                "D={ambient}: disagreement at signed distance {sd:.3e}"
            );
        }
        assert!(compared >= 900);
    }
}

#[test]
fn projected_hypercube_equals_projected_embedded_set() {
    // both directions of the set equality behind the back-projection domain
    let e = Embedding::sample(25, 2, 37, RowMode::Gaussian).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for _ in 0..1_000 {
        let x = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let y = e.b() * &x;
        assert!(in_zonotope(&y, &e, FEASIBILITY_TOL));
    }
    for _ in 0..1_000 {
        let x = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let y = e.b() * &x;
        let g = gamma(&y, &e, FEASIBILITY_TOL).expect("zonotope point");
        assert!((e.b() * &g - &y).norm() <= 1e-6);
        // image lies in the embedded set: it has a pre-image in the union
        let pre = phi_preimage(&convex_project(&g), &e).expect("gamma image is embedded");
        assert!(in_parallelotope_union(&pre, &e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn convex_projection_tensorizes(xs in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let x = DVector::from_vec(xs.clone());
        let p = convex_project(&x);
        for (i, v) in xs.iter().enumerate() {
            prop_assert_eq!(p[i], v.clamp(-1.0, 1.0));
        }
        // idempotence
        prop_assert_eq!(convex_project(&p), p);
    }

    #[test]
    fn convex_projection_commutes_with_sign_isometries(
        xs in prop::collection::vec(-5.0f64..5.0, 1..20),
        flips in prop::collection::vec(prop::bool::ANY, 20),
    ) {
        let n = xs.len();
        let x = DVector::from_vec(xs);
        let s = DVector::from_fn(n, |i, _| if flips[i % flips.len()] { -1.0 } else { 1.0 });
        let flipped = x.component_mul(&s);
        let lhs = convex_project(&flipped);
        let rhs = convex_project(&x).component_mul(&s);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn enclosing_box_touches_the_zonotope(seed in 0u64..32, ambient in 3usize..10) {
        let e = Embedding::sample(ambient, 2, seed, RowMode::Gaussian).unwrap();
        let widths = enclosing_half_widths(&e);
        // the sign witness saturating each direction is feasible by design
        for i in 0..2 {
            let x = DVector::from_fn(ambient, |j, _| e.b()[(i, j)].signum());
            let y = e.b() * x;
            prop_assert!((y[i] - widths[i]).abs() <= 1e-12);
            prop_assert!(in_zonotope(&y, &e, FEASIBILITY_TOL));
        }
    }
}

#[test]
fn identity_embedding_zonotope_is_the_hypercube() {
    let e = Embedding::from_matrix(DMatrix::identity(4, 4)).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for _ in 0..500 {
        let y = DVector::from_fn(4, |_, _| rng.random_range(-1.3..1.3));
        let inside = y.amax() <= 1.0;
        assert_eq!(in_zonotope(&y, &e, FEASIBILITY_TOL), inside || y.amax() <= 1.0 + FEASIBILITY_TOL);
    }
}
