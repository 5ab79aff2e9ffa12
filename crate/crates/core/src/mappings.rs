//! The two embeddings of the low-dimensional space into the hypercube:
//! `phi` (linear map followed by convex projection, total on R^d) and
//! `gamma` (back-projection, a bijection from the zonotope onto the embedded
//! set), plus the distance warpings used inside covariance kernels.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::embedding::{convex_project, Embedding};
use crate::error::MappingError;
use crate::geometry::{BoxDomain, ZonotopeDomain};

/// Iteration cap for the back-projection solver.
const GAMMA_MAX_ITERS: usize = 10_000;
/// Step-size stopping threshold for the back-projection solver.
const GAMMA_STEP_TOL: f64 = 1e-10;

/// Which embedding drives a run, together with its low-dimensional domain:
/// a fixed box for `phi`, the zonotope for `gamma`.
#[derive(Debug, Clone)]
pub enum MappingKind {
    Phi { search_box: BoxDomain },
    Gamma { domain: ZonotopeDomain },
}

impl MappingKind {
    /// The classical choice for `phi`: the box [-sqrt(d), sqrt(d)]^d.
    pub fn phi_default(embedding: &Embedding) -> Self {
        let d = embedding.low_dim();
        MappingKind::Phi {
            search_box: BoxDomain::cube(d, (d as f64).sqrt()),
        }
    }

    pub fn phi_with_box(search_box: BoxDomain) -> Self {
        MappingKind::Phi { search_box }
    }

    pub fn gamma(embedding: Arc<Embedding>) -> Self {
        MappingKind::Gamma {
            domain: ZonotopeDomain::new(embedding),
        }
    }

    /// The box over which acquisition search runs: the phi box, or the
    /// smallest box enclosing the zonotope.
    pub fn search_box(&self) -> BoxDomain {
        match self {
            MappingKind::Phi { search_box } => search_box.clone(),
            MappingKind::Gamma { domain } => domain.enclosing_box(),
        }
    }

    pub fn is_gamma(&self) -> bool {
        matches!(self, MappingKind::Gamma { .. })
    }

    /// Maps a low-dimensional point to its evaluation point in the hypercube.
    pub fn map_point(
        &self,
        y: &DVector<f64>,
        e: &Embedding,
        tol: f64,
    ) -> Result<DVector<f64>, MappingError> {
        match self {
            MappingKind::Phi { .. } => Ok(phi(y, e)),
            MappingKind::Gamma { .. } => gamma(y, e, tol),
        }
    }
}

/// The original embedding: convex projection of A*y onto the hypercube.
pub fn phi(y: &DVector<f64>, e: &Embedding) -> DVector<f64> {
    debug_assert_eq!(y.len(), e.low_dim());
    convex_project(&(e.a() * y))
}

/// Back-projection: the point of the hypercube closest to B^T y among those
/// whose orthogonal projection onto the embedding span equals B^T y.
///
/// Solves `argmin ||x - B^T y||^2 s.t. B x = y, x in [-1,1]^D` by Dykstra's
/// alternating projections between the box and the affine fiber, with a
/// periodic active-set polish that terminates exactly once the clamped set
/// settles. Points outside the zonotope have an empty feasible set and are
/// reported as a domain error.
pub fn gamma(y: &DVector<f64>, e: &Embedding, tol: f64) -> Result<DVector<f64>, MappingError> {
    if y.len() != e.low_dim() {
        return Err(MappingError::DimensionMismatch {
            expected: e.low_dim(),
            got: y.len(),
        });
    }
    assert!(tol > 0.0, "feasibility tolerance must be positive");
    let b = e.b();
    let x0 = b.transpose() * y;
    if x0.amax() <= 1.0 {
        // interior case: the unconstrained minimizer is already feasible
        return Ok(x0);
    }

    let mut x = x0.clone();
    let mut correction = DVector::<f64>::zeros(x.len());
    let mut previous = x.clone();
    let mut next_polish = 50usize;
    for iter in 0..GAMMA_MAX_ITERS {
        // affine fiber projection (exact, no correction needed for an
        // affine set), then box projection with Dykstra's correction
        let fiber = &x - b.transpose() * (b * &x - y);
        let relaxed = &fiber + &correction;
        let mut clamped = relaxed.clone();
        for v in clamped.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        correction = relaxed - &clamped;
        let step = (&clamped - &previous).amax();
        previous = clamped.clone();
        x = clamped;

        if step <= GAMMA_STEP_TOL {
            let residual = (b * &x - y).norm();
            if residual <= tol {
                return Ok(x);
            }
            // tiny steps with a large residual: the fiber misses the box
            if iter > 200 {
                return Err(MappingError::OutOfDomain { residual });
            }
        }
        if iter + 1 == next_polish {
            next_polish *= 2;
            if let Some(solution) = try_active_set_polish(&x0, &correction, y, e, tol) {
                return Ok(solution);
            }
        }
    }
    let residual = (b * &x - y).norm();
    if residual <= tol {
        Ok(x)
    } else {
        Err(MappingError::OutOfDomain { residual })
    }
}

/// Guesses the clamped set from the sign of Dykstra's correction vector and
/// solves the reduced equality-constrained projection in closed form.
/// Returns the exact minimizer when primal and dual feasibility verify.
fn try_active_set_polish(
    x0: &DVector<f64>,
    correction: &DVector<f64>,
    y: &DVector<f64>,
    e: &Embedding,
    tol: f64,
) -> Option<DVector<f64>> {
    let d = e.low_dim();
    let ambient = e.ambient_dim();
    let b = e.b();
    let mut clamp_sign = vec![0.0f64; ambient];
    let mut any_free = false;
    for i in 0..ambient {
        if correction[i] > 0.0 {
            clamp_sign[i] = 1.0;
        } else if correction[i] < 0.0 {
            clamp_sign[i] = -1.0;
        } else {
            any_free = true;
        }
    }
    if !any_free {
        return None;
    }
    // Gram of the free columns of B and the right-hand side y - B_F s_F - B_free x0_free
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = y.clone();
    for j in 0..ambient {
        let col = b.column(j);
        if clamp_sign[j] == 0.0 {
            for r in 0..d {
                for c in 0..d {
                    gram[(r, c)] += col[r] * col[c];
                }
            }
            rhs.axpy(-x0[j], &col, 1.0);
        } else {
            rhs.axpy(-clamp_sign[j], &col, 1.0);
        }
    }
    let chol = gram.cholesky()?;
    let multiplier = chol.solve(&rhs);
    let pull = b.transpose() * &multiplier;
    let mut x = DVector::<f64>::zeros(ambient);
    for i in 0..ambient {
        let unconstrained = x0[i] + pull[i];
        if clamp_sign[i] == 0.0 {
            // primal feasibility of the free block
            if unconstrained.abs() > 1.0 + 1e-12 {
                return None;
            }
            x[i] = unconstrained;
        } else {
            // dual feasibility: the unconstrained pull must point past the bound
            if clamp_sign[i] * unconstrained < 1.0 - 1e-12 {
                return None;
            }
            x[i] = clamp_sign[i];
        }
    }
    if (b * &x - y).norm() <= tol {
        Some(x)
    } else {
        None
    }
}

/// Projection-plus-distortion warping for the original embedding: scales the
/// clamp-normalized orthogonal projection of phi(y) so that kernel distances
/// account for the part of phi(y) lost to the projection.
pub fn psi_warp(y: &DVector<f64>, e: &Embedding) -> DVector<f64> {
    let image = phi(y, e);
    let z = e.b().transpose() * (e.b() * &image);
    distort(z, &image)
}

/// Distortion warping for the back-projection: here the orthogonal
/// projection of gamma(y) is B^T y itself, so only the correction applies.
pub fn psi_prime_warp(
    y: &DVector<f64>,
    e: &Embedding,
    tol: f64,
) -> Result<DVector<f64>, MappingError> {
    let x = gamma(y, e, tol)?;
    let z = e.b().transpose() * y;
    Ok(distort(z, &x))
}

fn distort(z: DVector<f64>, image: &DVector<f64>) -> DVector<f64> {
    let scale = z.amax().max(1.0);
    let z_prime = z / scale;
    let norm = z_prime.norm();
    if norm == 0.0 {
        // z = 0: the distortion factor is undefined; the warp degenerates to z
        log::debug!("degenerate warp at the origin of the embedding span");
        return z_prime;
    }
    let factor = 1.0 + (image - &z_prime).norm() / norm;
    factor * z_prime
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::RowMode;
    use crate::geometry::{in_zonotope, FEASIBILITY_TOL};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fig_embedding() -> Embedding {
        Embedding::from_matrix(DMatrix::from_column_slice(2, 1, &[0.5, 0.2])).unwrap()
    }

    #[test]
    fn phi_reference_values() {
        let e = fig_embedding();
        assert_eq!(phi(&DVector::zeros(1), &e), DVector::zeros(2));
        let img5 = phi(&DVector::from_vec(vec![5.0]), &e);
        assert_abs_diff_eq!(img5[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(img5[1], 1.0, epsilon = 1e-12);
        // non-injectivity past the corner
        let img6 = phi(&DVector::from_vec(vec![6.0]), &e);
        assert_eq!(img5, img6);
        // no clamping inside the strip intersection
        let y = DVector::from_vec(vec![1.5]);
        assert_eq!(phi(&y, &e), e.a() * &y);
    }

    #[test]
    fn gamma_reference_values() {
        let e = fig_embedding();
        let x = gamma(&DVector::zeros(1), &e, FEASIBILITY_TOL).unwrap();
        assert!(x.amax() <= 1e-12);

        // interior case: B^T y needs no clamping
        let x = gamma(&DVector::from_vec(vec![1.0]), &e, FEASIBILITY_TOL).unwrap();
        let scale = 1.0 / 0.29f64.sqrt();
        assert_abs_diff_eq!(x[0], 0.5 * scale, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 0.2 * scale, epsilon = 1e-9);

        // vertex case: the fiber meets the box in the single corner (1, 1)
        let vertex = 0.7 / 0.29f64.sqrt();
        let x = gamma(&DVector::from_vec(vec![vertex]), &e, FEASIBILITY_TOL).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn gamma_rejects_points_outside_the_zonotope() {
        let e = fig_embedding();
        assert!(matches!(
            gamma(&DVector::from_vec(vec![1.31]), &e, FEASIBILITY_TOL),
            Err(MappingError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn gamma_round_trip_on_random_embeddings() {
        let e = Embedding::sample(20, 3, 31, RowMode::Gaussian).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            // y = B x for x uniform in the hypercube is always in the zonotope
            let x = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
            let y = e.b() * &x;
            assert!(in_zonotope(&y, &e, FEASIBILITY_TOL));
            let back = gamma(&y, &e, FEASIBILITY_TOL).unwrap();
            assert!(back.amax() <= 1.0 + 1e-9);
            assert!((e.b() * &back - &y).norm() <= 1e-7);
        }
    }

    #[test]
    fn gamma_is_the_closest_feasible_point() {
        let e = Embedding::sample(12, 2, 77, RowMode::Gaussian).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..50 {
            let x = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let y = e.b() * &x;
            let sol = gamma(&y, &e, FEASIBILITY_TOL).unwrap();
            let anchor = e.b().transpose() * &y;
            let d_sol = (&sol - &anchor).norm();
            for _ in 0..20 {
                // random feasible competitor: clamp a perturbation back onto the fiber
                let mut competitor = &sol
                    + DVector::from_fn(12, |_, _| rng.random_range(-0.3..0.3f64));
                for _ in 0..2_000 {
                    competitor -= e.b().transpose() * (e.b() * &competitor - &y);
                    for v in competitor.iter_mut() {
                        *v = v.clamp(-1.0, 1.0);
                    }
                    if (e.b() * &competitor - &y).norm() <= 1e-10 {
                        break;
                    }
                }
                if (e.b() * &competitor - &y).norm() <= 1e-8 {
                    assert!(d_sol <= (&competitor - &anchor).norm() + 1e-6);
                }
            }
        }
    }

    #[test]
    fn psi_reduces_to_linear_map_inside_the_intersection() {
        let e = fig_embedding();
        let y = DVector::from_vec(vec![1.5]);
        let warped = psi_warp(&y, &e);
        let linear = e.a() * &y;
        assert!((warped - linear).amax() <= 1e-10);
        assert!(psi_warp(&DVector::zeros(1), &e).amax() == 0.0);
    }

    #[test]
    fn psi_applies_distortion_past_the_corner() {
        let e = fig_embedding();
        let y = DVector::from_vec(vec![5.0]);
        let image = phi(&y, &e); // (1, 1)
        let z = e.b().transpose() * (e.b() * &image);
        let z_prime = &z / z.amax().max(1.0);
        let factor = 1.0 + (&image - &z_prime).norm() / z_prime.norm();
        assert!(factor > 1.0);
        let expected = factor * z_prime;
        assert!((psi_warp(&y, &e) - expected).amax() <= 1e-12);
    }

    #[test]
    fn psi_prime_reference_values() {
        let e = fig_embedding();
        assert!(psi_prime_warp(&DVector::zeros(1), &e, FEASIBILITY_TOL)
            .unwrap()
            .amax()
            .abs()
            <= 1e-12);
        // no distortion when B^T y is feasible and inside the unit band
        let w = psi_prime_warp(&DVector::from_vec(vec![1.0]), &e, FEASIBILITY_TOL).unwrap();
        let scale = 1.0 / 0.29f64.sqrt();
        assert_abs_diff_eq!(w[0], 0.5 * scale, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], 0.2 * scale, epsilon = 1e-9);

        // hand-composed vertex case: z = B^T y, z' = z / z_max,
        // factor = 1 + ||(1,1) - z'|| / ||z'||
        let vertex = 0.7 / 0.29f64.sqrt();
        let y = DVector::from_vec(vec![vertex]);
        let z = e.b().transpose() * &y;
        assert_abs_diff_eq!(z[0], 0.35 / 0.29, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], 0.14 / 0.29, epsilon = 1e-12);
        let z_prime = &z / z[0];
        let corner = DVector::from_vec(vec![1.0, 1.0]);
        let factor = 1.0 + (&corner - &z_prime).norm() / z_prime.norm();
        let expected = factor * &z_prime;
        let w = psi_prime_warp(&y, &e, FEASIBILITY_TOL).unwrap();
        assert!((w - expected).amax() <= 1e-6);
    }

    #[test]
    fn mapping_kind_domains() {
        let e = Arc::new(Embedding::sample(10, 2, 1, RowMode::Gaussian).unwrap());
        let phi_kind = MappingKind::phi_default(&e);
        let bx = phi_kind.search_box();
        assert_abs_diff_eq!(bx.upper()[0], 2.0f64.sqrt(), epsilon = 1e-12);
        let gamma_kind = MappingKind::gamma(e.clone());
        let gb = gamma_kind.search_box();
        let w = crate::geometry::enclosing_half_widths(&e);
        assert_abs_diff_eq!(gb.upper()[0], w[0], epsilon = 1e-12);
        assert_abs_diff_eq!(gb.upper()[1], w[1], epsilon = 1e-12);
    }
}
