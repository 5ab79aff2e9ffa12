//! Geometric predicates and constructions in the low-dimensional space:
//! strips, parallelotopes, the minimal covering set, the zonotope shadow of
//! the hypercube, its enclosing box, and pre-images of embedded points.
//!
//! Membership in the zonotope reduces to linear feasibility of
//! `{x in [-1,1]^D : B x = y}`, decided by alternating projections between
//! the box and the affine fiber; the fiber projection has the closed form
//! `x - B^T (B x - y)` because B has orthonormal rows.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::embedding::{convex_project, Embedding};
use crate::error::GeometryError;

/// Default tolerance for feasibility decisions at the zonotope boundary.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Sweep cap for the alternating-projection feasibility engine.
pub const MAX_SWEEPS: usize = 10_000;
/// Slack on strip membership comparisons, absorbing dot-product roundoff.
const STRIP_EPS: f64 = 1e-12;
/// Half-width of the boundary band in pre-image classification: image
/// coordinates with |x_i| >= 1 - BOUNDARY_BAND turn into sign-matched
/// inequality constraints instead of equalities.
const BOUNDARY_BAND: f64 = 1e-9;

/// An axis-aligned box, the search/sampling domain primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxDomain {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, GeometryError> {
        assert_eq!(lower.len(), upper.len());
        for i in 0..lower.len() {
            if lower[i] > upper[i] {
                return Err(GeometryError::EmptyBox(i));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The cube [-half, half]^dim.
    pub fn cube(dim: usize, half: f64) -> Self {
        BoxDomain {
            lower: DVector::from_element(dim, -half),
            upper: DVector::from_element(dim, half),
        }
    }

    /// Box symmetric about the origin with per-coordinate half-widths.
    pub fn symmetric(half_widths: &DVector<f64>) -> Self {
        BoxDomain {
            lower: -half_widths,
            upper: half_widths.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        (0..self.dim()).all(|i| y[i] >= self.lower[i] && y[i] <= self.upper[i])
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.upper[i] - self.lower[i]).product()
    }

    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    pub fn clamp(&self, y: &mut DVector<f64>) {
        for i in 0..self.dim() {
            y[i] = y[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let u: f64 = rng.random();
            self.lower[i] + u * (self.upper[i] - self.lower[i])
        })
    }
}

/// The slab between two parallel hyperplanes: |<normal, y>| <= |delta|.
#[derive(Debug, Clone)]
pub struct Strip {
    pub normal: DVector<f64>,
    pub delta: f64,
}

impl Strip {
    /// Strip of the i-th row of the raw embedding matrix, with unit offset.
    pub fn from_row(e: &Embedding, i: usize) -> Self {
        Strip {
            normal: e.a().row(i).transpose(),
            delta: 1.0,
        }
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.normal.dot(y).abs() <= self.delta.abs() + STRIP_EPS
    }

    /// Distance between the two bounding hyperplanes.
    pub fn width(&self) -> f64 {
        2.0 * self.delta.abs() / self.normal.norm()
    }
}

/// Intersection of the d strips indexed by `indices`; compact and convex for
/// matrices whose row-submatrices all have full rank.
#[derive(Debug, Clone)]
pub struct Parallelotope {
    pub indices: Vec<usize>,
}

impl Parallelotope {
    pub fn new(indices: Vec<usize>, e: &Embedding) -> Self {
        debug_assert_eq!(indices.len(), e.low_dim());
        Parallelotope { indices }
    }

    pub fn contains(&self, y: &DVector<f64>, e: &Embedding) -> bool {
        self.indices
            .iter()
            .all(|&i| e.a().row(i).transpose().dot(y).abs() <= 1.0 + STRIP_EPS)
    }
}

/// True iff every coordinate of A*y lies in [-1, 1]; equivalently the convex
/// projection leaves A*y unchanged.
pub fn in_strip_intersection(y: &DVector<f64>, e: &Embedding) -> bool {
    debug_assert_eq!(y.len(), e.low_dim());
    let image = e.a() * y;
    image.iter().all(|v| v.abs() <= 1.0 + STRIP_EPS)
}

/// True iff at least d coordinates of A*y lie in [-1, 1], i.e. y belongs to
/// the union of all d-strip parallelotopes (the minimal set covering the
/// embedded search set).
pub fn in_parallelotope_union(y: &DVector<f64>, e: &Embedding) -> bool {
    debug_assert_eq!(y.len(), e.low_dim());
    let image = e.a() * y;
    let in_band = image.iter().filter(|v| v.abs() <= 1.0 + STRIP_EPS).count();
    in_band >= e.low_dim()
}

/// Per-direction half-widths of the smallest box enclosing the zonotope:
/// the i-th extreme value is the absolute row sum of B.
pub fn enclosing_half_widths(e: &Embedding) -> DVector<f64> {
    DVector::from_fn(e.low_dim(), |i, _| e.b().row(i).iter().map(|v| v.abs()).sum())
}

/// Decides feasibility of {x in [-1,1]^D : B x = y}, exact up to `tol` at the
/// zonotope boundary.
///
/// Alternating projections between the box and the affine fiber drive the
/// residual to the distance from y to the zonotope; a periodic active-set
/// solve certifies interior points exactly once the clamped set settles,
/// which plain alternating projections cannot do near the boundary.
pub fn in_zonotope(y: &DVector<f64>, e: &Embedding, tol: f64) -> bool {
    assert!(tol > 0.0, "feasibility tolerance must be positive");
    assert_eq!(y.len(), e.low_dim());
    let widths = enclosing_half_widths(e);
    for i in 0..y.len() {
        if y[i].abs() > widths[i] + tol {
            return false;
        }
    }
    let b = e.b();
    let x0 = b.transpose() * y;
    if x0.amax() <= 1.0 {
        // x0 itself is a witness: B x0 = B B^T y = y up to the Gram defect
        return true;
    }
    let mut x = convex_project(&x0);
    let mut r_prev = f64::INFINITY;
    let mut stalled = 0usize;
    let mut next_polish = 5usize;
    for sweep in 0..MAX_SWEEPS {
        let defect = b * &x - y;
        let r = defect.norm();
        if r <= tol {
            return true;
        }
        if sweep + 1 == next_polish {
            next_polish *= 4;
            if clamped_set_witness(&x, y, e, tol) {
                return true;
            }
        }
        if r_prev - r < 1e-6 * r {
            stalled += 1;
            if stalled > 50 && r > 10.0 * tol {
                return clamped_set_witness(&x, y, e, tol);
            }
        } else {
            stalled = 0;
        }
        r_prev = r;
        x -= b.transpose() * defect;
        for v in x.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
    }
    clamped_set_witness(&x, y, e, tol)
}

/// Reads the clamped coordinates off an iterate, solves the free block of
/// `B x = y` in closed form (minimum-norm), and accepts when the solution
/// stays inside the box: an exact feasibility witness.
fn clamped_set_witness(x: &DVector<f64>, y: &DVector<f64>, e: &Embedding, tol: f64) -> bool {
    let b = e.b();
    let d = e.low_dim();
    let ambient = e.ambient_dim();
    let mut gram = DMatrix::<f64>::zeros(d, d); // B_free B_free^T
    let mut rhs = y.clone(); // y - B_clamped s
    let mut free = Vec::with_capacity(ambient);
    for j in 0..ambient {
        let col = b.column(j);
        if x[j] >= 1.0 - 1e-12 {
            rhs.axpy(-1.0, &col, 1.0);
        } else if x[j] <= -1.0 + 1e-12 {
            rhs.axpy(1.0, &col, 1.0);
        } else {
            free.push(j);
            for r in 0..d {
                for c in 0..d {
                    gram[(r, c)] += col[r] * col[c];
                }
            }
        }
    }
    if free.is_empty() {
        return rhs.norm() <= tol;
    }
    let Some(chol) = gram.cholesky() else {
        return false;
    };
    let w = chol.solve(&rhs);
    let mut witness = x.clone();
    for &j in &free {
        let u = b.column(j).dot(&w);
        if u.abs() > 1.0 + 1e-12 {
            return false;
        }
        witness[j] = u.clamp(-1.0, 1.0);
    }
    (b * witness - y).norm() <= tol
}

/// Zonotope domain descriptor: the embedding plus cached enclosing-box data.
#[derive(Debug, Clone)]
pub struct ZonotopeDomain {
    embedding: Arc<Embedding>,
    half_widths: DVector<f64>,
}

impl ZonotopeDomain {
    pub fn new(embedding: Arc<Embedding>) -> Self {
        let half_widths = enclosing_half_widths(&embedding);
        ZonotopeDomain {
            embedding,
            half_widths,
        }
    }

    pub fn embedding(&self) -> &Arc<Embedding> {
        &self.embedding
    }

    pub fn half_widths(&self) -> &DVector<f64> {
        &self.half_widths
    }

    /// The smallest axis-aligned box containing the zonotope.
    pub fn enclosing_box(&self) -> BoxDomain {
        BoxDomain::symmetric(&self.half_widths)
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        in_zonotope(y, &self.embedding, tol)
    }
}

/// Default sampling box for strip-related sets: the cube of radius
/// `max_i 2 sqrt(d) / ||A_i||`, which covers the strip intersection.
pub fn strip_sampling_box(e: &Embedding) -> BoxDomain {
    let d = e.low_dim() as f64;
    let mut r: f64 = 0.0;
    for i in 0..e.ambient_dim() {
        let norm = e.a().row(i).norm();
        if norm > 0.0 {
            r = r.max(2.0 * d.sqrt() / norm);
        }
    }
    BoxDomain::cube(e.low_dim(), r)
}

/// Finds a pre-image y of an embedded point x, with at least d coordinates of
/// A*y inside [-1, 1], so that the returned point lies in the minimal
/// covering set and `convex_project(A y) = x` within 1e-8.
///
/// Image coordinates within `1e-9` of the boundary contribute sign-matched
/// inequality constraints rather than equalities; the exact-equality system
/// is infeasible for points on the boundary of the hypercube.
pub fn phi_preimage(x: &DVector<f64>, e: &Embedding) -> Result<DVector<f64>, GeometryError> {
    if x.len() != e.ambient_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: e.ambient_dim(),
            got: x.len(),
        });
    }
    let threshold = 1.0 - BOUNDARY_BAND;
    let mut equalities = Vec::new(); // |x_i| < 1 - band
    let mut clamped = Vec::new(); // (index, sign)
    for i in 0..x.len() {
        if x[i].abs() < threshold {
            equalities.push(i);
        } else {
            clamped.push((i, x[i].signum()));
        }
    }

    let d = e.low_dim();
    let y0 = if equalities.len() >= d {
        pinned_solution(x, e, &equalities, &clamped)?
    } else {
        relaxed_feasible_point(x, e, &equalities, &clamped)?
    };
    let y = promote_into_union(y0, e)?;

    let image = convex_project(&(e.a() * &y));
    let residual = (&image - x).amax();
    if residual > 1e-8 || !in_parallelotope_union(&y, e) {
        return Err(GeometryError::NoPreimage { residual });
    }
    Ok(y)
}

/// Least-squares solve of the equality block when it pins y (>= d interior
/// coordinates). Inequalities then hold automatically for embedded points;
/// they are verified and any violation is reported as a missing pre-image.
fn pinned_solution(
    x: &DVector<f64>,
    e: &Embedding,
    equalities: &[usize],
    clamped: &[(usize, f64)],
) -> Result<DVector<f64>, GeometryError> {
    let d = e.low_dim();
    let m = equalities.len();
    let a_eq = DMatrix::<f64>::from_fn(m, d, |r, c| e.a()[(equalities[r], c)]);
    let rhs = DVector::<f64>::from_fn(m, |r, _| x[equalities[r]]);
    let svd = a_eq.svd(true, true);
    let y = svd
        .solve(&rhs, 1e-12)
        .map_err(|_| GeometryError::NoPreimage { residual: f64::INFINITY })?;
    let mut worst = 0.0f64;
    for r in 0..m {
        worst = worst.max((e.a().row(equalities[r]).transpose().dot(&y) - rhs[r]).abs());
    }
    for &(i, sign) in clamped {
        let v = sign * e.a().row(i).transpose().dot(&y);
        worst = worst.max((1.0 - BOUNDARY_BAND) - v);
    }
    if worst > 1e-7 {
        return Err(GeometryError::NoPreimage { residual: worst });
    }
    Ok(y)
}

/// Phase-one pass: cyclic projections onto the equality hyperplanes and the
/// violated half-spaces of the relaxed system, until the worst violation
/// drops below the feasibility tolerance.
fn relaxed_feasible_point(
    x: &DVector<f64>,
    e: &Embedding,
    equalities: &[usize],
    clamped: &[(usize, f64)],
) -> Result<DVector<f64>, GeometryError> {
    let d = e.low_dim();
    let bound = 1.0 - BOUNDARY_BAND;
    let mut y = if equalities.is_empty() {
        DVector::<f64>::zeros(d)
    } else {
        let m = equalities.len();
        let a_eq = DMatrix::<f64>::from_fn(m, d, |r, c| e.a()[(equalities[r], c)]);
        let rhs = DVector::<f64>::from_fn(m, |r, _| x[equalities[r]]);
        a_eq.svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::<f64>::zeros(d))
    };
    let rows: Vec<(DVector<f64>, f64)> = (0..e.ambient_dim())
        .map(|i| {
            let row = e.a().row(i).transpose();
            let n2 = row.norm_squared();
            (row, n2)
        })
        .collect();

    let mut worst = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for &i in equalities {
            let (row, n2) = &rows[i];
            let r = row.dot(&y) - x[i];
            if r != 0.0 {
                y.axpy(-r / n2, row, 1.0);
            }
        }
        for &(i, sign) in clamped {
            let (row, n2) = &rows[i];
            let v = bound - sign * row.dot(&y);
            if v > 0.0 {
                y.axpy(sign * v / n2, row, 1.0);
            }
        }
        // read-only violation pass
        worst = 0.0;
        for &i in equalities {
            worst = worst.max((rows[i].0.dot(&y) - x[i]).abs());
        }
        for &(i, sign) in clamped {
            worst = worst.max(bound - sign * rows[i].0.dot(&y));
        }
        if worst <= FEASIBILITY_TOL {
            return Ok(y);
        }
    }
    Err(GeometryError::NoPreimage { residual: worst })
}

/// Drives a feasible pre-image into the parallelotope union without changing
/// its image: repeatedly solves for d pinned coordinates and takes the
/// smallest convex combination that brings one more coordinate of A*y onto
/// the boundary of its strip.
fn promote_into_union(
    mut y: DVector<f64>,
    e: &Embedding,
) -> Result<DVector<f64>, GeometryError> {
    let d = e.low_dim();
    for _round in 0..=d {
        let image = e.a() * &y;
        let mut in_band: Vec<usize> = Vec::new();
        let mut outside: Vec<usize> = Vec::new();
        for i in 0..image.len() {
            if image[i].abs() <= 1.0 + STRIP_EPS {
                in_band.push(i);
            } else {
                outside.push(i);
            }
        }
        if in_band.len() >= d {
            return Ok(y);
        }
        // pin every in-band coordinate plus the nearest outside ones
        outside.sort_by(|&p, &q| image[p].abs().total_cmp(&image[q].abs()));
        let mut pinned = in_band.clone();
        pinned.extend(outside.iter().take(d - in_band.len()).copied());
        let a_pin = DMatrix::<f64>::from_fn(d, d, |r, c| e.a()[(pinned[r], c)]);
        let target = DVector::<f64>::from_fn(d, |r, _| {
            let i = pinned[r];
            if image[i].abs() <= 1.0 + STRIP_EPS {
                image[i]
            } else {
                image[i].signum()
            }
        });
        let y_pinned = a_pin
            .lu()
            .solve(&target)
            .ok_or(GeometryError::NoPreimage { residual: f64::INFINITY })?;
        let image_pinned = e.a() * &y_pinned;

        // smallest lambda at which a non-pinned outside coordinate reaches
        // the boundary of its strip
        let mut lambda_min: Option<f64> = None;
        for &i in &outside {
            if pinned.contains(&i) {
                continue;
            }
            let b_cur = image[i];
            let b_new = image_pinned[i];
            let edge = b_cur.signum();
            let denom = b_cur - b_new;
            if edge * b_new < 1.0 && denom.abs() > 1e-300 {
                let lambda = (b_cur - edge) / denom;
                if lambda > 0.0 && lambda < 1.0 {
                    lambda_min = Some(match lambda_min {
                        Some(l) => l.min(lambda),
                        None => lambda,
                    });
                }
            }
        }
        match lambda_min {
            // no coordinate blocks: the pinned solution itself works
            None => y = y_pinned,
            Some(l) => y = l * &y_pinned + (1.0 - l) * &y,
        }
    }
    let image = e.a() * &y;
    let in_band = image.iter().filter(|v| v.abs() <= 1.0 + STRIP_EPS).count();
    if in_band >= d {
        Ok(y)
    } else {
        Err(GeometryError::NoPreimage { residual: f64::NAN })
    }
}
