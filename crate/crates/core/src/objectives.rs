//! Benchmark objectives embedded in high dimension: each function acts on a
//! seeded subset of active coordinates, affinely rescaled from [-1, 1] to its
//! native domain, so the value is invariant to every inactive coordinate.
//!
//! Reference minima are frozen from independent numerical optimization against
//! the standard formulas and literature minimizers.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::engine::ObjectiveFn;
use crate::error::BenchError;

const BRANIN_MIN: f64 = 5.0 / (4.0 * std::f64::consts::PI);
const GIUNTA_MIN: f64 = 0.06447042053690566;
const HARTMANN6_MIN: f64 = -3.322368011415514;
const BOREHOLE_MIN: f64 = 7.819676328755232;
const LEVY_MIN: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FunctionKind {
    Branin,
    Giunta,
    Hartmann6,
    Borehole,
    Levy,
}

impl FunctionKind {
    fn effective_dim(self) -> usize {
        match self {
            FunctionKind::Branin | FunctionKind::Giunta => 2,
            FunctionKind::Hartmann6 => 6,
            FunctionKind::Borehole => 8,
            FunctionKind::Levy => 10,
        }
    }

    fn native_bounds(self) -> Vec<(f64, f64)> {
        match self {
            FunctionKind::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
            FunctionKind::Giunta => vec![(-1.0, 1.0); 2],
            FunctionKind::Hartmann6 => vec![(0.0, 1.0); 6],
            FunctionKind::Borehole => vec![
                (0.05, 0.15),
                (100.0, 50_000.0),
                (63_070.0, 115_600.0),
                (990.0, 1_110.0),
                (63.1, 116.0),
                (700.0, 820.0),
                (1_120.0, 1_680.0),
                (9_855.0, 12_045.0),
            ],
            FunctionKind::Levy => vec![(-10.0, 10.0); 10],
        }
    }

    fn minimum(self) -> f64 {
        match self {
            FunctionKind::Branin => BRANIN_MIN,
            FunctionKind::Giunta => GIUNTA_MIN,
            FunctionKind::Hartmann6 => HARTMANN6_MIN,
            FunctionKind::Borehole => BOREHOLE_MIN,
            FunctionKind::Levy => LEVY_MIN,
        }
    }

    fn minimizer(self) -> Vec<f64> {
        match self {
            FunctionKind::Branin => vec![-std::f64::consts::PI, 12.275],
            FunctionKind::Giunta => vec![0.46732001867579626; 2],
            FunctionKind::Hartmann6 => vec![
                0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054,
            ],
            FunctionKind::Borehole => vec![
                0.05, 50_000.0, 63_070.0, 990.0, 63.1, 820.0, 1_680.0, 9_855.0,
            ],
            FunctionKind::Levy => vec![1.0; 10],
        }
    }

    fn eval(self, v: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            FunctionKind::Branin => {
                let (x1, x2) = (v[0], v[1]);
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
            }
            FunctionKind::Giunta => {
                let c = 16.0 / 15.0;
                0.6 + v
                    .iter()
                    .map(|&x| {
                        let u = c * x - 1.0;
                        u.sin() + u.sin().powi(2) + (4.0 * u).sin() / 50.0
                    })
                    .sum::<f64>()
            }
            FunctionKind::Hartmann6 => {
                const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
                const A: [[f64; 6]; 4] = [
                    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
                    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
                    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
                    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
                ];
                const P: [[f64; 6]; 4] = [
                    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
                    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
                    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
                    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
                ];
                -(0..4)
                    .map(|i| {
                        let inner: f64 = (0..6)
                            .map(|j| A[i][j] * (v[j] - P[i][j]).powi(2))
                            .sum();
                        ALPHA[i] * (-inner).exp()
                    })
                    .sum::<f64>()
            }
            FunctionKind::Borehole => {
                let (rw, r, tu, hu, tl, hl, l, kw) =
                    (v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
                let ln_r = (r / rw).ln();
                2.0 * PI * tu * (hu - hl)
                    / (ln_r * (1.0 + 2.0 * l * tu / (ln_r * rw * rw * kw) + tu / tl))
            }
            FunctionKind::Levy => {
                let n = v.len();
                let w = |x: f64| 1.0 + (x - 1.0) / 4.0;
                let w1 = w(v[0]);
                let wn = w(v[n - 1]);
                let mut acc = (PI * w1).sin().powi(2);
                for &x in &v[..n - 1] {
                    let wi = w(x);
                    acc += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
                }
                acc + (wn - 1.0).powi(2) * (1.0 + (2.0 * PI * wn).sin().powi(2))
            }
        }
    }
}

fn kind_from_name(name: &str) -> Result<FunctionKind, BenchError> {
    match name {
        "branin" => Ok(FunctionKind::Branin),
        "giunta" => Ok(FunctionKind::Giunta),
        "hartmann6" | "hartman6" => Ok(FunctionKind::Hartmann6),
        "borehole" => Ok(FunctionKind::Borehole),
        "levy" => Ok(FunctionKind::Levy),
        other => Err(BenchError::UnknownObjective(other.to_string())),
    }
}

/// Names accepted by [`make_objective`].
pub fn known_objectives() -> &'static [&'static str] {
    &["branin", "giunta", "hartmann6", "borehole", "levy"]
}

/// A benchmark instance: the function, its seeded active coordinates inside
/// the D-dimensional hypercube, and the known minimum for gap computation.
#[derive(Debug, Clone)]
pub struct Objective {
    name: String,
    kind: FunctionKind,
    ambient_dim: usize,
    active: Vec<usize>,
    bounds: Vec<(f64, f64)>,
}

impl Objective {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn effective_dim(&self) -> usize {
        self.kind.effective_dim()
    }

    /// The active coordinate subset, fixed per instance.
    pub fn active_coords(&self) -> &[usize] {
        &self.active
    }

    /// Known global minimum over the hypercube.
    pub fn f_star(&self) -> f64 {
        self.kind.minimum()
    }

    fn to_native(&self, t: f64, j: usize) -> f64 {
        let (lo, hi) = self.bounds[j];
        lo + 0.5 * (t + 1.0) * (hi - lo)
    }

    fn from_native(&self, v: f64, j: usize) -> f64 {
        let (lo, hi) = self.bounds[j];
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    /// A hypercube point that attains the known minimum: the literature
    /// minimizer on the active coordinates, zero elsewhere.
    pub fn embedded_minimizer(&self) -> DVector<f64> {
        let mins = self.kind.minimizer();
        let mut x = DVector::zeros(self.ambient_dim);
        for (j, &coord) in self.active.iter().enumerate() {
            x[coord] = self.from_native(mins[j], j);
        }
        x
    }
}

impl ObjectiveFn for Objective {
    fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    fn eval(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.ambient_dim);
        let native: Vec<f64> = self
            .active
            .iter()
            .enumerate()
            .map(|(j, &coord)| self.to_native(x[coord].clamp(-1.0, 1.0), j))
            .collect();
        self.kind.eval(&native)
    }
}

/// Builds a named objective over [-1, 1]^D with a seeded draw of distinct
/// active coordinates.
pub fn make_objective(name: &str, ambient_dim: usize, seed: u64) -> Result<Objective, BenchError> {
    let kind = kind_from_name(name)?;
    let d_e = kind.effective_dim();
    if ambient_dim < d_e {
        return Err(BenchError::AmbientTooSmall {
            name: name.to_string(),
            needed: d_e,
            got: ambient_dim,
        });
    }
    // partial Fisher-Yates: the first d_e entries of a seeded shuffle
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ambient_dim).collect();
    for i in 0..d_e {
        let j = rng.random_range(i..ambient_dim);
        indices.swap(i, j);
    }
    let mut active = indices[..d_e].to_vec();
    active.sort_unstable();
    Ok(Objective {
        name: name.to_string(),
        kind,
        ambient_dim,
        active,
        bounds: kind.native_bounds(),
    })
}
