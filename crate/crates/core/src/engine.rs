//! The sequential optimization loop: sample an embedding, build a design in
//! the low-dimensional domain, fit the surrogate, and alternate acquisition
//! maximization with objective evaluations; plus the uniform-sampling
//! baseline over the original hypercube.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{initial_design, maximize_acquisition};
use crate::embedding::{Embedding, RowMode};
use crate::error::EngineError;
use crate::geometry::FEASIBILITY_TOL;
use crate::gp::{fit, FitOptions};
use crate::kernel::{KernelFamily, KernelSpec, Warp};
use crate::mappings::MappingKind;
use crate::util::seed_stream;

/// A black-box objective over the hypercube [-1, 1]^D.
pub trait ObjectiveFn: Sync {
    fn ambient_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> f64;
}

/// Objective wrapper around a plain function, for tests and ad-hoc use.
pub struct FnObjective<F: Fn(&DVector<f64>) -> f64 + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&DVector<f64>) -> f64 + Sync> ObjectiveFn for FnObjective<F> {
    fn ambient_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }
}

/// Which low-dimensional embedding the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingChoice {
    Phi,
    Gamma,
}

impl std::fmt::Display for MappingChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MappingChoice::Phi => write!(f, "phi"),
            MappingChoice::Gamma => write!(f, "gamma"),
        }
    }
}

/// Everything one seeded run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ambient_dim: usize,
    pub low_dim: usize,
    /// Total number of objective evaluations (design included).
    pub budget: usize,
    /// Initial design size; defaults to max(4, 2d).
    pub n0: Option<usize>,
    pub mapping: MappingChoice,
    pub kernel_family: KernelFamily,
    pub warp: Warp,
    pub row_mode: RowMode,
    pub seed: u64,
    /// Acquisition restarts; defaults to 20 d.
    pub acquisition_restarts: Option<usize>,
    /// Full hyperparameter refit cadence, in observations.
    pub refit_every: usize,
    pub feasibility_tol: f64,
}

impl RunConfig {
    pub fn new(
        ambient_dim: usize,
        low_dim: usize,
        budget: usize,
        mapping: MappingChoice,
        kernel_family: KernelFamily,
        warp: Warp,
        seed: u64,
    ) -> Self {
        RunConfig {
            ambient_dim,
            low_dim,
            budget,
            n0: None,
            mapping,
            kernel_family,
            warp,
            row_mode: RowMode::Gaussian,
            seed,
            acquisition_restarts: None,
            refit_every: 5,
            feasibility_tol: FEASIBILITY_TOL,
        }
    }

    pub fn design_size(&self) -> usize {
        self.n0.unwrap_or_else(|| 4.max(2 * self.low_dim))
    }

    pub fn restarts(&self) -> usize {
        self.acquisition_restarts.unwrap_or(20 * self.low_dim)
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.low_dim == 0 || self.low_dim > self.ambient_dim {
            return Err(EngineError::InvalidConfig(format!(
                "need 1 <= d <= D, got d = {}, D = {}",
                self.low_dim, self.ambient_dim
            )));
        }
        if self.design_size() >= self.budget {
            return Err(EngineError::InvalidConfig(format!(
                "design size {} must be smaller than the budget {}",
                self.design_size(),
                self.budget
            )));
        }
        Ok(())
    }
}

/// Best point seen so far, with the per-iteration history of bests.
#[derive(Debug, Clone)]
pub struct Incumbent {
    /// Low-dimensional argument of the best point (absent for the uniform
    /// baseline, which has no low-dimensional parameterization).
    pub best_y: Option<DVector<f64>>,
    pub best_x: DVector<f64>,
    pub best_f: f64,
    /// history[i] = best objective value after i+1 evaluations; non-increasing.
    pub history: Vec<f64>,
}

impl Incumbent {
    fn record(&mut self, y: Option<&DVector<f64>>, x: &DVector<f64>, f: f64) {
        if f < self.best_f {
            self.best_f = f;
            self.best_x = x.clone();
            self.best_y = y.cloned();
        }
        self.history.push(self.best_f);
    }
}

/// One evaluated point of a run.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub y: Option<DVector<f64>>,
    pub x: DVector<f64>,
    pub f: f64,
    pub best_f: f64,
    pub elapsed_s: f64,
}

/// Surrogate snapshot taken at each refit.
#[derive(Debug, Clone)]
pub struct ModelSummary {
    pub iteration: usize,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub log_likelihood: f64,
}

/// Full per-iteration trace of one seeded replicate.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub embedding: Option<Arc<Embedding>>,
    pub design_fallback: bool,
    /// Mean fraction of acquisition probes spent outside the zonotope.
    pub outside_fraction: f64,
    pub model_summaries: Vec<ModelSummary>,
}

fn finite_or_abort(f: f64, evaluation: usize) -> Result<f64, EngineError> {
    if f.is_finite() {
        Ok(f)
    } else {
        Err(EngineError::NonFiniteObjective { evaluation })
    }
}

/// Runs the full random-embedding loop: exactly `budget` objective
/// evaluations, deterministic given the config seed.
pub fn rembo_run<O: ObjectiveFn + ?Sized>(
    config: &RunConfig,
    objective: &O,
) -> Result<(Incumbent, RunRecord), EngineError> {
    config.validate()?;
    if objective.ambient_dim() != config.ambient_dim {
        return Err(EngineError::InvalidConfig(format!(
            "objective dimension {} does not match config D = {}",
            objective.ambient_dim(),
            config.ambient_dim
        )));
    }
    let started = Instant::now();
    let embedding = Arc::new(Embedding::sample(
        config.ambient_dim,
        config.low_dim,
        seed_stream(config.seed, "embedding"),
        config.row_mode,
    )?);
    let mapping = match config.mapping {
        MappingChoice::Phi => MappingKind::phi_default(&embedding),
        MappingChoice::Gamma => MappingKind::gamma(embedding.clone()),
    };
    let tol = config.feasibility_tol;

    let design = initial_design(
        config.design_size(),
        &mapping,
        tol,
        seed_stream(config.seed, "design"),
    )?;

    let mut incumbent = Incumbent {
        best_y: None,
        best_x: DVector::zeros(config.ambient_dim),
        best_f: f64::INFINITY,
        history: Vec::with_capacity(config.budget),
    };
    let mut iterations = Vec::with_capacity(config.budget);
    let mut observations: Vec<(DVector<f64>, f64)> = Vec::with_capacity(config.budget);

    for (i, y) in design.points.iter().enumerate() {
        let x = mapping.map_point(y, &embedding, tol)?;
        let f = finite_or_abort(objective.eval(&x), i)?;
        observations.push((y.clone(), f));
        incumbent.record(Some(y), &x, f);
        iterations.push(IterationRecord {
            iteration: i,
            y: Some(y.clone()),
            x,
            f,
            best_f: incumbent.best_f,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
    }

    let template = KernelSpec::template(config.kernel_family, config.warp, config.low_dim);
    let fit_options = FitOptions {
        seed: seed_stream(config.seed, "fit"),
        ..FitOptions::default()
    };
    let mut model = fit(&observations, &template, &embedding, &mapping, &fit_options)?
        .with_refit_every(config.refit_every);
    let mut model_summaries = vec![ModelSummary {
        iteration: design.points.len(),
        lengthscales: model.spec().lengthscales.values(),
        variance: model.spec().variance,
        log_likelihood: model.log_likelihood(),
    }];

    let mut outside_acc = 0.0f64;
    let mut outside_count = 0usize;
    for i in design.points.len()..config.budget {
        let outcome = maximize_acquisition(
            &model,
            config.restarts(),
            seed_stream(config.seed, &format!("acq-{i}")),
        )?;
        outside_acc += outcome.outside_fraction;
        outside_count += 1;
        let y = outcome.point;
        let x = mapping.map_point(&y, &embedding, tol)?;
        let f = finite_or_abort(objective.eval(&x), i)?;
        incumbent.record(Some(&y), &x, f);
        iterations.push(IterationRecord {
            iteration: i,
            y: Some(y.clone()),
            x,
            f,
            best_f: incumbent.best_f,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        model = model.update(y, f)?;
        if model.updates_since_refit() == 0 {
            model_summaries.push(ModelSummary {
                iteration: i,
                lengthscales: model.spec().lengthscales.values(),
                variance: model.spec().variance,
                log_likelihood: model.log_likelihood(),
            });
        }
    }

    let record = RunRecord {
        iterations,
        embedding: Some(embedding),
        design_fallback: design.used_projection_fallback,
        outside_fraction: if outside_count == 0 {
            0.0
        } else {
            outside_acc / outside_count as f64
        },
        model_summaries,
    };
    Ok((incumbent, record))
}

/// Uniform-sampling baseline in the original hypercube: the same trace
/// format, no low-dimensional parameterization.
pub fn random_search_run<O: ObjectiveFn + ?Sized>(
    config: &RunConfig,
    objective: &O,
) -> Result<(Incumbent, RunRecord), EngineError> {
    if objective.ambient_dim() != config.ambient_dim {
        return Err(EngineError::InvalidConfig(format!(
            "objective dimension {} does not match config D = {}",
            objective.ambient_dim(),
            config.ambient_dim
        )));
    }
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(seed_stream(config.seed, "random-search"));
    let mut incumbent = Incumbent {
        best_y: None,
        best_x: DVector::zeros(config.ambient_dim),
        best_f: f64::INFINITY,
        history: Vec::with_capacity(config.budget),
    };
    let mut iterations = Vec::with_capacity(config.budget);
    for i in 0..config.budget {
        let x = DVector::from_fn(config.ambient_dim, |_, _| rng.random_range(-1.0..1.0));
        let f = finite_or_abort(objective.eval(&x), i)?;
        incumbent.record(None, &x, f);
        iterations.push(IterationRecord {
            iteration: i,
            y: None,
            x,
            f,
            best_f: incumbent.best_f,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok((
        incumbent,
        RunRecord {
            iterations,
            embedding: None,
            design_fallback: false,
            outside_fraction: 0.0,
            model_summaries: Vec::new(),
        },
    ))
}
