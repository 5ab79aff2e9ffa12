//! Stationary covariance kernels over warped low-dimensional inputs.
//!
//! Three warp choices mirror the three ways of measuring distance between
//! low-dimensional points: none (distances in R^d), mapped (distances between
//! the embedded images in the hypercube), and projected (distances between
//! distortion-corrected orthogonal projections). Mapped and projected warps
//! follow the active mapping, so the same spec covers both embeddings.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{GpError, MappingError};
use crate::mappings::{phi, psi_prime_warp, psi_warp, MappingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::SquaredExponential => write!(f, "squared-exponential"),
            KernelFamily::Matern52 => write!(f, "matern52"),
        }
    }
}

/// Distance warp applied to inputs before the stationary kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Warp {
    /// Identity: distances in R^d; anisotropic lengthscales allowed.
    None,
    /// Distances between embedded images (phi or gamma of the points).
    Mapped,
    /// Distances between distortion-corrected projections.
    Projected,
}

impl std::fmt::Display for Warp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warp::None => write!(f, "none"),
            Warp::Mapped => write!(f, "mapped"),
            Warp::Projected => write!(f, "projected"),
        }
    }
}

/// Lengthscales: anisotropic for the identity warp, isotropic for warped
/// kernels whose distances live in the ambient space.
#[derive(Debug, Clone, PartialEq)]
pub enum Lengthscales {
    Isotropic(f64),
    Anisotropic(DVector<f64>),
}

impl Lengthscales {
    pub fn count(&self) -> usize {
        match self {
            Lengthscales::Isotropic(_) => 1,
            Lengthscales::Anisotropic(v) => v.len(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Lengthscales::Isotropic(t) => vec![*t],
            Lengthscales::Anisotropic(v) => v.iter().copied().collect(),
        }
    }

    pub fn from_values(values: &[f64], anisotropic: bool) -> Self {
        if anisotropic {
            Lengthscales::Anisotropic(DVector::from_column_slice(values))
        } else {
            Lengthscales::Isotropic(values[0])
        }
    }
}

/// Full kernel specification; Gram matrices built from it are symmetric
/// positive definite once the jitter is added.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub warp: Warp,
    pub lengthscales: Lengthscales,
    pub variance: f64,
    /// Relative jitter added to the unit diagonal of the correlation matrix.
    pub jitter: f64,
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        warp: Warp,
        lengthscales: Lengthscales,
        variance: f64,
        jitter: f64,
    ) -> Result<Self, GpError> {
        if variance <= 0.0 || !variance.is_finite() {
            return Err(GpError::InvalidSpec(format!(
                "variance must be positive, got {variance}"
            )));
        }
        if jitter <= 0.0 || !jitter.is_finite() {
            return Err(GpError::InvalidSpec(format!(
                "jitter must be positive, got {jitter}"
            )));
        }
        let ls = lengthscales.values();
        if ls.iter().any(|t| *t <= 0.0 || !t.is_finite()) {
            return Err(GpError::InvalidSpec("lengthscales must be positive".into()));
        }
        if warp != Warp::None && matches!(lengthscales, Lengthscales::Anisotropic(_)) {
            return Err(GpError::InvalidSpec(
                "warped kernels measure ambient distances and take a single lengthscale".into(),
            ));
        }
        Ok(KernelSpec {
            family,
            warp,
            lengthscales,
            variance,
            jitter,
        })
    }

    /// Starting template for fitting: unit variance, unit lengthscales,
    /// default relative jitter of 1e-8.
    pub fn template(family: KernelFamily, warp: Warp, low_dim: usize) -> Self {
        let lengthscales = match warp {
            Warp::None => Lengthscales::Anisotropic(DVector::from_element(low_dim, 1.0)),
            _ => Lengthscales::Isotropic(1.0),
        };
        KernelSpec {
            family,
            warp,
            lengthscales,
            variance: 1.0,
            jitter: 1e-8,
        }
    }

    pub fn anisotropic(&self) -> bool {
        matches!(self.lengthscales, Lengthscales::Anisotropic(_))
    }
}

/// Applies the spec's warp to a point. For warped kernels the point must lie
/// in the active mapping's domain (total for phi, the zonotope for gamma).
pub fn warped_input(
    y: &DVector<f64>,
    e: &Embedding,
    mapping: &MappingKind,
    warp: Warp,
    tol: f64,
) -> Result<DVector<f64>, MappingError> {
    match (warp, mapping) {
        (Warp::None, _) => Ok(y.clone()),
        (Warp::Mapped, MappingKind::Phi { .. }) => Ok(phi(y, e)),
        (Warp::Mapped, MappingKind::Gamma { .. }) => crate::mappings::gamma(y, e, tol),
        (Warp::Projected, MappingKind::Phi { .. }) => Ok(psi_warp(y, e)),
        (Warp::Projected, MappingKind::Gamma { .. }) => psi_prime_warp(y, e, tol),
    }
}

/// Squared scaled distance between warped inputs, split per lengthscale
/// component: one entry per dimension (anisotropic) or a single entry holding
/// the full squared distance (isotropic).
pub(crate) fn squared_components(u: &DVector<f64>, v: &DVector<f64>, anisotropic: bool) -> Vec<f64> {
    if anisotropic {
        (0..u.len()).map(|k| (u[k] - v[k]).powi(2)).collect()
    } else {
        vec![(u - v).norm_squared()]
    }
}

/// Unit-variance correlation from per-component squared distances.
pub(crate) fn correlation_from_components(
    family: KernelFamily,
    lengthscales: &[f64],
    comps: &[f64],
) -> f64 {
    let s2: f64 = comps
        .iter()
        .zip(lengthscales)
        .map(|(c, t)| c / (t * t))
        .sum();
    match family {
        KernelFamily::SquaredExponential => (-s2).exp(),
        KernelFamily::Matern52 => {
            let s = s2.sqrt();
            let a = 5.0f64.sqrt() * s;
            (1.0 + a + 5.0 * s2 / 3.0) * (-a).exp()
        }
    }
}

/// Correlation and its gradient with respect to log lengthscales.
pub(crate) fn correlation_and_grad(
    family: KernelFamily,
    lengthscales: &[f64],
    comps: &[f64],
    grad: &mut [f64],
) -> f64 {
    let scaled: Vec<f64> = comps
        .iter()
        .zip(lengthscales)
        .map(|(c, t)| c / (t * t))
        .collect();
    let s2: f64 = scaled.iter().sum();
    match family {
        KernelFamily::SquaredExponential => {
            let c = (-s2).exp();
            for (g, sc) in grad.iter_mut().zip(&scaled) {
                *g = c * 2.0 * sc;
            }
            c
        }
        KernelFamily::Matern52 => {
            let s = s2.sqrt();
            let a = 5.0f64.sqrt() * s;
            let e = (-a).exp();
            let c = (1.0 + a + 5.0 * s2 / 3.0) * e;
            // d corr / d s2 = -(5/6)(1 + a) e^{-a}; d s2 / d log t_k = -2 sc_k
            let dc_ds2 = -(5.0 / 6.0) * (1.0 + a) * e;
            for (g, sc) in grad.iter_mut().zip(&scaled) {
                *g = dc_ds2 * (-2.0 * sc);
            }
            c
        }
    }
}

/// Kernel evaluation between two low-dimensional points under the active
/// mapping; equals the variance at zero distance.
pub fn kernel_eval(
    spec: &KernelSpec,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
    e: &Embedding,
    mapping: &MappingKind,
    tol: f64,
) -> Result<f64, GpError> {
    let u = warped_input(y1, e, mapping, spec.warp, tol)?;
    let v = warped_input(y2, e, mapping, spec.warp, tol)?;
    let comps = squared_components(&u, &v, spec.anisotropic());
    let ls = spec.lengthscales.values();
    Ok(spec.variance * correlation_from_components(spec.family, &ls, &comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FEASIBILITY_TOL;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn fig_embedding() -> Embedding {
        Embedding::from_matrix(DMatrix::from_column_slice(2, 1, &[0.5, 0.2])).unwrap()
    }

    #[test]
    fn zero_distance_returns_variance() {
        let e = fig_embedding();
        let mapping = MappingKind::phi_default(&e);
        for family in [KernelFamily::SquaredExponential, KernelFamily::Matern52] {
            let spec = KernelSpec::new(
                family,
                Warp::None,
                Lengthscales::Isotropic(0.7),
                2.5,
                1e-8,
            )
            .unwrap();
            let y = DVector::from_vec(vec![0.3]);
            let k = kernel_eval(&spec, &y, &y, &e, &mapping, FEASIBILITY_TOL).unwrap();
            assert_abs_diff_eq!(k, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn squared_exponential_closed_form() {
        // distance exactly one lengthscale: sigma^2 * e^{-1}
        let e = fig_embedding();
        let mapping = MappingKind::phi_default(&e);
        let spec = KernelSpec::new(
            KernelFamily::SquaredExponential,
            Warp::None,
            Lengthscales::Isotropic(0.4),
            1.0,
            1e-8,
        )
        .unwrap();
        let y1 = DVector::from_vec(vec![0.0]);
        let y2 = DVector::from_vec(vec![0.4]);
        let k = kernel_eval(&spec, &y1, &y2, &e, &mapping, FEASIBILITY_TOL).unwrap();
        assert_abs_diff_eq!(k, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn mapped_kernel_sees_identical_images_as_identical() {
        // phi(5) = phi(6) = (1, 1) in the reference geometry
        let e = fig_embedding();
        let mapping = MappingKind::phi_default(&e);
        let spec = KernelSpec::new(
            KernelFamily::SquaredExponential,
            Warp::Mapped,
            Lengthscales::Isotropic(1.0),
            3.0,
            1e-8,
        )
        .unwrap();
        let k = kernel_eval(
            &spec,
            &DVector::from_vec(vec![5.0]),
            &DVector::from_vec(vec![6.0]),
            &e,
            &mapping,
            FEASIBILITY_TOL,
        )
        .unwrap();
        assert_abs_diff_eq!(k, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn anisotropic_warped_spec_is_rejected() {
        assert!(KernelSpec::new(
            KernelFamily::Matern52,
            Warp::Mapped,
            Lengthscales::Anisotropic(DVector::from_element(2, 1.0)),
            1.0,
            1e-8,
        )
        .is_err());
        assert!(KernelSpec::new(
            KernelFamily::Matern52,
            Warp::None,
            Lengthscales::Isotropic(-1.0),
            1.0,
            1e-8,
        )
        .is_err());
    }

    #[test]
    fn correlation_gradients_match_finite_differences() {
        let comps = vec![0.09, 0.25];
        for family in [KernelFamily::SquaredExponential, KernelFamily::Matern52] {
            let ls = [0.6, 1.3];
            let mut grad = vec![0.0; 2];
            let c0 = correlation_and_grad(family, &ls, &comps, &mut grad);
            assert_abs_diff_eq!(
                c0,
                correlation_from_components(family, &ls, &comps),
                epsilon = 1e-14
            );
            let h = 1e-6f64;
            for k in 0..2 {
                let mut up = ls.to_vec();
                let mut dn = ls.to_vec();
                up[k] *= h.exp();
                dn[k] *= (-h).exp();
                let fd = (correlation_from_components(family, &up, &comps)
                    - correlation_from_components(family, &dn, &comps))
                    / (2.0 * h);
                assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-7);
            }
        }
    }
}
