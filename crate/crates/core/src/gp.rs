//! Gaussian-process regression over warped inputs with profiled maximum
//! likelihood: the constant trend and the variance have closed-form optima
//! given the lengthscales, so the search runs over log lengthscales only.
//!
//! Everything is kept in correlation form: the Cholesky factor and the
//! weight vector refer to `C + jitter I` with unit diagonal, and the fitted
//! variance scales predictions afterwards.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::embedding::Embedding;
use crate::error::GpError;
use crate::geometry::FEASIBILITY_TOL;
use crate::kernel::{
    correlation_and_grad, correlation_from_components, squared_components, warped_input,
    KernelSpec, Lengthscales, Warp,
};
use crate::mappings::MappingKind;
use crate::util::mix_seed;

/// Jitter escalation cap (relative to the unit correlation diagonal).
const MAX_JITTER: f64 = 1e-4;
/// Lengthscale search bounds relative to the domain diameter.
const THETA_LOWER_FACTOR: f64 = 1e-2;
const THETA_UPPER_FACTOR: f64 = 10.0;
/// Variance clamp relative to the sample variance of the targets.
const VARIANCE_LOWER_FACTOR: f64 = 1e-6;
const VARIANCE_UPPER_FACTOR: f64 = 1e2;

/// Controls for the multistart likelihood search.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Space-filling draws in log-lengthscale space.
    pub multistarts: usize,
    /// Gradient ascent runs from the best-scoring draws.
    pub ascend_top: usize,
    /// Accepted steps per ascent.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            multistarts: 50,
            ascend_top: 5,
            max_steps: 40,
            seed: 0,
        }
    }
}

/// A fitted Gaussian-process surrogate. Immutable; `update` returns a new
/// model so fitted values can be shared across threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    mapping: MappingKind,
    embedding: Arc<Embedding>,
    inputs: Vec<DVector<f64>>,
    warped: Vec<DVector<f64>>,
    targets: DVector<f64>,
    trend: f64,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    log_likelihood: f64,
    refit_every: usize,
    updates_since_refit: usize,
    fit_options: FitOptions,
    feasibility_tol: f64,
}

impl GpModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn mapping(&self) -> &MappingKind {
        &self.mapping
    }

    pub fn embedding(&self) -> &Arc<Embedding> {
        &self.embedding
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn trend(&self) -> f64 {
        self.trend
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn feasibility_tol(&self) -> f64 {
        self.feasibility_tol
    }

    /// Observations appended since the last full hyperparameter refit.
    pub fn updates_since_refit(&self) -> usize {
        self.updates_since_refit
    }

    /// Sets the full-refit cadence used by [`GpModel::update`].
    pub fn with_refit_every(mut self, refit_every: usize) -> Self {
        self.refit_every = refit_every.max(1);
        self
    }

    /// Smallest observed target, the incumbent for improvement criteria.
    pub fn f_min(&self) -> f64 {
        self.targets.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Predictive mean and variance at a low-dimensional point.
    pub fn predict(&self, y: &DVector<f64>) -> Result<(f64, f64), GpError> {
        let u = warped_input(y, &self.embedding, &self.mapping, self.spec.warp, self.feasibility_tol)?;
        let ls = self.spec.lengthscales.values();
        let aniso = self.spec.anisotropic();
        let r = DVector::from_fn(self.n(), |i, _| {
            let comps = squared_components(&u, &self.warped[i], aniso);
            correlation_from_components(self.spec.family, &ls, &comps)
        });
        let mean = self.trend + r.dot(&self.alpha);
        let z = solve_lower(&self.chol_l, &r);
        let var = self.spec.variance * (1.0 - z.norm_squared());
        Ok((mean, var.max(0.0)))
    }

    /// Appends one observation, extending the factorization by one row.
    /// Hyperparameters stay frozen between refits; every `refit_every`-th
    /// update triggers a full multistart refit warm-started at the current
    /// lengthscales.
    pub fn update(&self, y: DVector<f64>, f: f64) -> Result<GpModel, GpError> {
        if !f.is_finite() {
            return Err(GpError::InvalidData(format!(
                "non-finite target value {f}"
            )));
        }
        let next_count = self.updates_since_refit + 1;
        if next_count >= self.refit_every {
            let mut obs: Vec<(DVector<f64>, f64)> = self
                .inputs
                .iter()
                .cloned()
                .zip(self.targets.iter().copied())
                .collect();
            obs.push((y, f));
            let mut options = self.fit_options.clone();
            options.seed = mix_seed(options.seed, self.n() as u64);
            return fit_with_warm_start(
                &obs,
                &self.spec,
                &self.embedding,
                &self.mapping,
                &options,
                Some(&self.spec.lengthscales),
                self.refit_every,
                self.feasibility_tol,
            );
        }

        let u = warped_input(&y, &self.embedding, &self.mapping, self.spec.warp, self.feasibility_tol)?;
        let n = self.n();
        let ls = self.spec.lengthscales.values();
        let aniso = self.spec.anisotropic();
        let r = DVector::from_fn(n, |i, _| {
            let comps = squared_components(&u, &self.warped[i], aniso);
            correlation_from_components(self.spec.family, &ls, &comps)
        });

        let mut inputs = self.inputs.clone();
        let mut warped = self.warped.clone();
        inputs.push(y);
        warped.push(u);
        let targets = DVector::from_fn(n + 1, |i, _| {
            if i < n {
                self.targets[i]
            } else {
                f
            }
        });

        let z = solve_lower(&self.chol_l, &r);
        let diag_sq = 1.0 + self.spec.jitter - z.norm_squared();
        let mut spec = self.spec.clone();
        let chol_l = if diag_sq > 0.01 * self.spec.jitter {
            let mut l = DMatrix::<f64>::zeros(n + 1, n + 1);
            l.view_mut((0, 0), (n, n)).copy_from(&self.chol_l);
            for j in 0..n {
                l[(n, j)] = z[j];
            }
            l[(n, n)] = diag_sq.sqrt();
            l
        } else {
            // duplicate warped input: the extended factor degenerates, so
            // rebuild at an escalated jitter
            let corr = correlation_matrix(&warped, &spec);
            let (l, used) = cholesky_with_escalation(&corr, self.spec.jitter * 10.0)?;
            spec.jitter = used;
            l
        };

        let beta = targets.add_scalar(-self.trend);
        let alpha = cholesky_solve(&chol_l, &beta);
        let log_likelihood =
            log_likelihood_from_parts(&chol_l, &beta, &alpha, spec.variance);
        Ok(GpModel {
            spec,
            mapping: self.mapping.clone(),
            embedding: self.embedding.clone(),
            inputs,
            warped,
            targets,
            trend: self.trend,
            chol_l,
            alpha,
            log_likelihood,
            refit_every: self.refit_every,
            updates_since_refit: next_count,
            fit_options: self.fit_options.clone(),
            feasibility_tol: self.feasibility_tol,
        })
    }

    /// Builds a model at the given hyperparameters without any likelihood
    /// search. The trend defaults to the generalized-least-squares profile.
    pub fn with_fixed_hyperparameters(
        observations: &[(DVector<f64>, f64)],
        spec: &KernelSpec,
        embedding: &Arc<Embedding>,
        mapping: &MappingKind,
        trend: Option<f64>,
    ) -> Result<GpModel, GpError> {
        if observations.is_empty() {
            return Err(GpError::InvalidData("need at least one observation".into()));
        }
        check_targets(observations)?;
        let tol = FEASIBILITY_TOL;
        let (inputs, warped, targets) = warp_observations(observations, embedding, mapping, spec.warp, tol)?;
        let mut spec = spec.clone();
        let corr = correlation_matrix(&warped, &spec);
        let (chol_l, used) = cholesky_with_escalation(&corr, spec.jitter)?;
        spec.jitter = used;
        let trend = match trend {
            Some(t) => t,
            None => {
                let ones = DVector::from_element(targets.len(), 1.0);
                let rinv_f = cholesky_solve(&chol_l, &targets);
                let rinv_1 = cholesky_solve(&chol_l, &ones);
                ones.dot(&rinv_f) / ones.dot(&rinv_1)
            }
        };
        let beta = targets.add_scalar(-trend);
        let alpha = cholesky_solve(&chol_l, &beta);
        let log_likelihood = log_likelihood_from_parts(&chol_l, &beta, &alpha, spec.variance);
        Ok(GpModel {
            spec,
            mapping: mapping.clone(),
            embedding: embedding.clone(),
            inputs,
            warped,
            targets,
            trend,
            chol_l,
            alpha,
            log_likelihood,
            refit_every: usize::MAX,
            updates_since_refit: 0,
            fit_options: FitOptions::default(),
            feasibility_tol: tol,
        })
    }
}

/// Fits trend, variance and lengthscales by profiled maximum likelihood with
/// a space-filling multistart and gradient ascent from the best draws.
pub fn fit(
    observations: &[(DVector<f64>, f64)],
    template: &KernelSpec,
    embedding: &Arc<Embedding>,
    mapping: &MappingKind,
    options: &FitOptions,
) -> Result<GpModel, GpError> {
    fit_with_warm_start(
        observations,
        template,
        embedding,
        mapping,
        options,
        None,
        5,
        FEASIBILITY_TOL,
    )
}

#[allow(clippy::too_many_arguments)]
fn fit_with_warm_start(
    observations: &[(DVector<f64>, f64)],
    template: &KernelSpec,
    embedding: &Arc<Embedding>,
    mapping: &MappingKind,
    options: &FitOptions,
    warm_start: Option<&Lengthscales>,
    refit_every: usize,
    tol: f64,
) -> Result<GpModel, GpError> {
    if observations.len() < 2 {
        return Err(GpError::InvalidData(format!(
            "need at least 2 observations to fit, got {}",
            observations.len()
        )));
    }
    check_targets(observations)?;
    let (inputs, warped, targets) = warp_observations(observations, embedding, mapping, template.warp, tol)?;
    let n = targets.len();

    let mean = targets.sum() / n as f64;
    let var_f = targets.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n as f64;

    let aniso = template.anisotropic();
    let p = if aniso { embedding.low_dim() } else { 1 };
    let dist = DistanceData::build(&warped, p, aniso);

    let diameter = domain_diameter(template.warp, mapping, embedding);
    let log_lb = (THETA_LOWER_FACTOR * diameter).ln();
    let log_ub = (THETA_UPPER_FACTOR * diameter).ln();

    if var_f <= 1e-300 {
        // constant targets: the likelihood is flat in the lengthscales and
        // the profiled variance collapses; keep a nominal spec
        let mid = 0.5 * (log_lb + log_ub);
        let ls = Lengthscales::from_values(&vec![mid.exp(); p], aniso);
        let spec = KernelSpec::new(template.family, template.warp, ls, 1e-12, template.jitter)?;
        let obs: Vec<(DVector<f64>, f64)> = inputs
            .iter()
            .cloned()
            .zip(targets.iter().copied())
            .collect();
        let mut model =
            GpModel::with_fixed_hyperparameters(&obs, &spec, embedding, mapping, Some(mean))?;
        model.refit_every = refit_every;
        model.fit_options = options.clone();
        model.feasibility_tol = tol;
        return Ok(model);
    }

    let var_bounds = (VARIANCE_LOWER_FACTOR * var_f, VARIANCE_UPPER_FACTOR * var_f);
    let evaluate = |log_ls: &[f64]| -> Result<Profiled, GpError> {
        profile_likelihood(
            template.family,
            log_ls,
            &dist,
            &targets,
            template.jitter,
            var_bounds,
        )
    };

    // space-filling candidates in log-lengthscale space
    let mut candidates = latin_hypercube_logspace(options.multistarts, p, log_lb, log_ub, options.seed);
    if let Some(warm) = warm_start {
        let warm_log: Vec<f64> = warm
            .values()
            .iter()
            .map(|t| t.ln().clamp(log_lb, log_ub))
            .collect();
        if warm_log.len() == p {
            candidates.push(warm_log);
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if let Ok(prof) = evaluate(&cand) {
            scored.push((prof.lml, cand));
        }
    }
    if scored.is_empty() {
        return Err(GpError::Conditioning { jitter: MAX_JITTER });
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best_logls = scored[0].1.clone();
    let mut best = evaluate(&best_logls)?;
    for (_, start) in scored.iter().take(options.ascend_top.max(1)) {
        if let Ok((logls, prof)) = ascend(
            start,
            log_lb,
            log_ub,
            options.max_steps,
            template.family,
            &dist,
            &targets,
            template.jitter,
            var_bounds,
        ) {
            if prof.lml > best.lml {
                best = prof;
                best_logls = logls;
            }
        }
    }

    let theta: Vec<f64> = best_logls.iter().map(|l| l.exp()).collect();
    let spec = KernelSpec::new(
        template.family,
        template.warp,
        Lengthscales::from_values(&theta, aniso),
        best.variance,
        best.jitter,
    )?;
    let beta = targets.add_scalar(-best.trend);
    let alpha = cholesky_solve(&best.chol_l, &beta);
    Ok(GpModel {
        spec,
        mapping: mapping.clone(),
        embedding: embedding.clone(),
        inputs,
        warped,
        targets,
        trend: best.trend,
        chol_l: best.chol_l,
        alpha,
        log_likelihood: best.lml,
        refit_every,
        updates_since_refit: 0,
        fit_options: options.clone(),
        feasibility_tol: tol,
    })
}

fn check_targets(observations: &[(DVector<f64>, f64)]) -> Result<(), GpError> {
    for (_, f) in observations {
        if !f.is_finite() {
            return Err(GpError::InvalidData(format!("non-finite target value {f}")));
        }
    }
    Ok(())
}

type WarpedObs = (Vec<DVector<f64>>, Vec<DVector<f64>>, DVector<f64>);

fn warp_observations(
    observations: &[(DVector<f64>, f64)],
    embedding: &Arc<Embedding>,
    mapping: &MappingKind,
    warp: Warp,
    tol: f64,
) -> Result<WarpedObs, GpError> {
    let mut inputs = Vec::with_capacity(observations.len());
    let mut warped = Vec::with_capacity(observations.len());
    let mut targets = Vec::with_capacity(observations.len());
    for (y, f) in observations {
        warped.push(warped_input(y, embedding, mapping, warp, tol)?);
        inputs.push(y.clone());
        targets.push(*f);
    }
    Ok((inputs, warped, DVector::from_vec(targets)))
}

fn domain_diameter(warp: Warp, mapping: &MappingKind, embedding: &Embedding) -> f64 {
    match warp {
        Warp::None => mapping.search_box().diameter(),
        // warped distances live in (a bounded distortion of) the hypercube
        _ => 2.0 * (embedding.ambient_dim() as f64).sqrt(),
    }
}

/// Per-lengthscale squared-distance components for all input pairs.
struct DistanceData {
    comps: Vec<DMatrix<f64>>,
    n: usize,
}

impl DistanceData {
    fn build(warped: &[DVector<f64>], p: usize, aniso: bool) -> Self {
        let n = warped.len();
        let mut comps = vec![DMatrix::<f64>::zeros(n, n); p];
        for i in 0..n {
            for j in (i + 1)..n {
                let c = squared_components(&warped[i], &warped[j], aniso);
                for k in 0..p {
                    comps[k][(i, j)] = c[k];
                    comps[k][(j, i)] = c[k];
                }
            }
        }
        DistanceData { comps, n }
    }

    fn pair(&self, i: usize, j: usize, buf: &mut [f64]) {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = self.comps[k][(i, j)];
        }
    }
}

struct Profiled {
    lml: f64,
    trend: f64,
    variance: f64,
    jitter: f64,
    chol_l: DMatrix<f64>,
}

/// Likelihood with the trend profiled by generalized least squares and the
/// variance by its closed form, clamped to the allowed range.
fn profile_likelihood(
    family: crate::kernel::KernelFamily,
    log_ls: &[f64],
    dist: &DistanceData,
    targets: &DVector<f64>,
    base_jitter: f64,
    var_bounds: (f64, f64),
) -> Result<Profiled, GpError> {
    let n = dist.n;
    let ls: Vec<f64> = log_ls.iter().map(|l| l.exp()).collect();
    let p = ls.len();
    let mut corr = DMatrix::<f64>::identity(n, n);
    let mut buf = vec![0.0; p];
    for i in 0..n {
        for j in (i + 1)..n {
            dist.pair(i, j, &mut buf);
            let c = correlation_from_components(family, &ls, &buf);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let (chol_l, jitter) = cholesky_with_escalation(&corr, base_jitter)?;
    let ones = DVector::from_element(n, 1.0);
    let rinv_f = cholesky_solve(&chol_l, targets);
    let rinv_1 = cholesky_solve(&chol_l, &ones);
    let trend = ones.dot(&rinv_f) / ones.dot(&rinv_1);
    let beta = targets.add_scalar(-trend);
    let alpha = cholesky_solve(&chol_l, &beta);
    let variance = (beta.dot(&alpha) / n as f64).clamp(var_bounds.0, var_bounds.1);
    let lml = log_likelihood_from_parts(&chol_l, &beta, &alpha, variance);
    Ok(Profiled {
        lml,
        trend,
        variance,
        jitter,
        chol_l,
    })
}

/// Profiled likelihood and its gradient with respect to log lengthscales
/// (the profiled trend and variance contribute nothing at their optimum).
#[allow(clippy::too_many_arguments)]
fn profile_likelihood_with_grad(
    family: crate::kernel::KernelFamily,
    log_ls: &[f64],
    dist: &DistanceData,
    targets: &DVector<f64>,
    base_jitter: f64,
    var_bounds: (f64, f64),
) -> Result<(Profiled, Vec<f64>), GpError> {
    let prof = profile_likelihood(family, log_ls, dist, targets, base_jitter, var_bounds)?;
    let n = dist.n;
    let ls: Vec<f64> = log_ls.iter().map(|l| l.exp()).collect();
    let p = ls.len();
    let beta = targets.add_scalar(-prof.trend);
    let alpha = cholesky_solve(&prof.chol_l, &beta);
    let rinv = cholesky_inverse(&prof.chol_l);
    let mut grad = vec![0.0; p];
    let mut buf = vec![0.0; p];
    let mut gbuf = vec![0.0; p];
    for i in 0..n {
        for j in i..n {
            dist.pair(i, j, &mut buf);
            correlation_and_grad(family, &ls, &buf, &mut gbuf);
            let weight = alpha[i] * alpha[j] / prof.variance - rinv[(i, j)];
            let sym = if i == j { 0.5 } else { 1.0 };
            for k in 0..p {
                grad[k] += sym * weight * gbuf[k];
            }
        }
    }
    Ok((prof, grad))
}

#[allow(clippy::too_many_arguments)]
fn ascend(
    start: &[f64],
    log_lb: f64,
    log_ub: f64,
    max_steps: usize,
    family: crate::kernel::KernelFamily,
    dist: &DistanceData,
    targets: &DVector<f64>,
    base_jitter: f64,
    var_bounds: (f64, f64),
) -> Result<(Vec<f64>, Profiled), GpError> {
    let mut current = start.to_vec();
    let (mut prof, mut grad) =
        profile_likelihood_with_grad(family, &current, dist, targets, base_jitter, var_bounds)?;
    let mut step = 0.3;
    let mut accepted = 0;
    while accepted < max_steps && step > 1e-4 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let trial: Vec<f64> = current
            .iter()
            .zip(&grad)
            .map(|(c, g)| (c + step * g / norm).clamp(log_lb, log_ub))
            .collect();
        if trial == current {
            break;
        }
        match profile_likelihood(family, &trial, dist, targets, base_jitter, var_bounds) {
            Ok(p_trial) if p_trial.lml > prof.lml => {
                current = trial;
                accepted += 1;
                step = (step * 1.6).min(2.0);
                let (p2, g2) = profile_likelihood_with_grad(
                    family, &current, dist, targets, base_jitter, var_bounds,
                )?;
                prof = p2;
                grad = g2;
            }
            _ => step *= 0.4,
        }
    }
    Ok((current, prof))
}

/// Log marginal likelihood at fully specified hyperparameters.
/// Exposed so independent finite-difference checks can call the same
/// quantity the fitter optimizes.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    warped_inputs: &[DVector<f64>],
    targets: &DVector<f64>,
    trend: f64,
) -> Result<f64, GpError> {
    let corr = correlation_matrix(warped_inputs, spec);
    let (chol_l, _) = cholesky_with_escalation(&corr, spec.jitter)?;
    let beta = targets.add_scalar(-trend);
    let alpha = cholesky_solve(&chol_l, &beta);
    Ok(log_likelihood_from_parts(&chol_l, &beta, &alpha, spec.variance))
}

/// Analytic gradient of the log marginal likelihood with respect to the log
/// lengthscales, at fixed variance and trend.
pub fn log_marginal_likelihood_grad(
    spec: &KernelSpec,
    warped_inputs: &[DVector<f64>],
    targets: &DVector<f64>,
    trend: f64,
) -> Result<(f64, Vec<f64>), GpError> {
    let aniso = spec.anisotropic();
    let p = spec.lengthscales.count();
    let dist = DistanceData::build(warped_inputs, p, aniso);
    let n = dist.n;
    let ls = spec.lengthscales.values();
    let corr = correlation_matrix(warped_inputs, spec);
    let (chol_l, _) = cholesky_with_escalation(&corr, spec.jitter)?;
    let beta = targets.add_scalar(-trend);
    let alpha = cholesky_solve(&chol_l, &beta);
    let value = log_likelihood_from_parts(&chol_l, &beta, &alpha, spec.variance);
    let rinv = cholesky_inverse(&chol_l);
    let mut grad = vec![0.0; p];
    let mut buf = vec![0.0; p];
    let mut gbuf = vec![0.0; p];
    for i in 0..n {
        for j in i..n {
            dist.pair(i, j, &mut buf);
            correlation_and_grad(spec.family, &ls, &buf, &mut gbuf);
            let weight = alpha[i] * alpha[j] / spec.variance - rinv[(i, j)];
            let sym = if i == j { 0.5 } else { 1.0 };
            for k in 0..p {
                grad[k] += sym * weight * gbuf[k];
            }
        }
    }
    Ok((value, grad))
}

fn correlation_matrix(warped: &[DVector<f64>], spec: &KernelSpec) -> DMatrix<f64> {
    let n = warped.len();
    let ls = spec.lengthscales.values();
    let aniso = spec.anisotropic();
    let mut corr = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let comps = squared_components(&warped[i], &warped[j], aniso);
            let c = correlation_from_components(spec.family, &ls, &comps);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    corr
}

/// Cholesky of `corr + jitter I`, escalating the jitter tenfold on failure
/// up to the cap. Duplicated warped inputs make the correlation matrix
/// structurally rank-deficient, which this absorbs.
fn cholesky_with_escalation(
    corr: &DMatrix<f64>,
    base_jitter: f64,
) -> Result<(DMatrix<f64>, f64), GpError> {
    let n = corr.nrows();
    let mut jitter = base_jitter;
    while jitter <= MAX_JITTER {
        let mut m = corr.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    Err(GpError::Conditioning { jitter })
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut z = b.clone();
    for i in 0..n {
        for j in 0..i {
            let v = l[(i, j)] * z[j];
            z[i] -= v;
        }
        z[i] /= l[(i, i)];
    }
    z
}

fn solve_lower_transpose(l: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let mut x = z.clone();
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let v = l[(j, i)] * x[j];
            x[i] -= v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == c { 1.0 } else { 0.0 });
        let col = cholesky_solve(l, &e);
        inv.set_column(c, &col);
    }
    inv
}

fn log_likelihood_from_parts(
    chol_l: &DMatrix<f64>,
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
    variance: f64,
) -> f64 {
    let n = beta.len() as f64;
    let log_det: f64 = (0..beta.len()).map(|i| chol_l[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (n * (2.0 * std::f64::consts::PI * variance).ln() + log_det + beta.dot(alpha) / variance)
}

fn latin_hypercube_logspace(
    count: usize,
    dims: usize,
    lb: f64,
    ub: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut vals: Vec<f64> = (0..count)
            .map(|k| {
                let u: f64 = rng.random();
                lb + (k as f64 + u) / count as f64 * (ub - lb)
            })
            .collect();
        // Fisher-Yates
        for i in (1..count).rev() {
            let j = rng.random_range(0..=i);
            vals.swap(i, j);
        }
        columns.push(vals);
    }
    (0..count)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}
