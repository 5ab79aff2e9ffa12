//! Experiment orchestration: replicate seeding, concurrent cell execution,
//! result persistence, and summary aggregation.
//!
//! Fairness contract: the objective instance (its active-coordinate draw) and
//! the embedding seed for a given replicate depend only on the objective,
//! the dimensions and the base seed — never on the method or kernel — so
//! every method inside a comparison sees the same problem instances.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{CellSpec, MethodSpec, SuiteConfig};
use crate::engine::{
    random_search_run, rembo_run, Incumbent, MappingChoice, RunConfig, RunRecord,
};
use crate::error::BenchError;
use crate::objectives::{make_objective, Objective};
use crate::trace::{
    read_trace, summarize_gaps, trace_to_string, SummaryRow, TraceMeta,
};
use crate::util::{mix_seed, seed_stream};

/// Seed of the objective instance for one replicate: method-independent.
pub fn instance_seed(base_seed: u64, objective: &str, ambient_dim: usize, replicate: usize) -> u64 {
    let h = seed_stream(base_seed, objective);
    mix_seed(mix_seed(h, ambient_dim as u64), replicate as u64)
}

/// Seed of the run (embedding, design, acquisition) for one replicate:
/// shared by every method on the same problem instance.
pub fn run_seed(
    base_seed: u64,
    objective: &str,
    ambient_dim: usize,
    low_dim: usize,
    replicate: usize,
) -> u64 {
    let h = seed_stream(seed_stream(base_seed, objective), "run");
    mix_seed(
        mix_seed(mix_seed(h, ambient_dim as u64), low_dim as u64),
        replicate as u64,
    )
}

/// One finished replicate: the run outputs plus its optimality-gap history.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub seed: u64,
    pub incumbent: Incumbent,
    pub record: RunRecord,
    pub objective: Objective,
    pub gaps: Vec<f64>,
}

/// Replicates either finish or carry their failure; the suite keeps going.
pub type ReplicateOutcome = Result<ReplicateRun, String>;

#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: CellSpec,
    pub replicates: Vec<ReplicateOutcome>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub cells: Vec<CellResult>,
}

impl CellSpec {
    fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            ambient_dim: self.ambient_dim,
            low_dim: self.low_dim,
            budget: self.budget,
            n0: self.n0,
            mapping: match self.method {
                MethodSpec::RemboGamma => MappingChoice::Gamma,
                // random-search takes this path only for trace shape; unused
                MethodSpec::RemboPhi | MethodSpec::RandomSearch => MappingChoice::Phi,
            },
            kernel_family: self.kernel,
            warp: self.warp,
            row_mode: self.row_mode,
            seed,
            acquisition_restarts: self.acquisition_restarts,
            refit_every: self.refit_every,
            feasibility_tol: crate::geometry::FEASIBILITY_TOL,
        }
    }
}

/// Executes one replicate of one cell.
pub fn run_cell_replicate(
    cell: &CellSpec,
    base_seed: u64,
    replicate: usize,
) -> Result<ReplicateRun, BenchError> {
    let objective = make_objective(
        &cell.objective,
        cell.ambient_dim,
        instance_seed(base_seed, &cell.objective, cell.ambient_dim, replicate),
    )?;
    let seed = run_seed(
        base_seed,
        &cell.objective,
        cell.ambient_dim,
        cell.low_dim,
        replicate,
    );
    let config = cell.run_config(seed);
    let (incumbent, record) = match cell.method {
        MethodSpec::RandomSearch => random_search_run(&config, &objective)?,
        _ => rembo_run(&config, &objective)?,
    };
    let f_star = objective.f_star();
    let gaps = incumbent.history.iter().map(|f| f - f_star).collect();
    Ok(ReplicateRun {
        replicate,
        seed,
        incumbent,
        record,
        objective,
        gaps,
    })
}

/// Runs every (cell, replicate) pair, in parallel over the active rayon
/// pool; results are regrouped by index, so aggregation order never depends
/// on completion order.
pub fn run_suite(config: &SuiteConfig) -> SuiteResult {
    let jobs: Vec<(usize, usize)> = (0..config.cells.len())
        .flat_map(|c| (0..config.replicates).map(move |r| (c, r)))
        .collect();
    let mut outcomes: Vec<((usize, usize), ReplicateOutcome)> = jobs
        .into_par_iter()
        .map(|(c, r)| {
            let outcome = run_cell_replicate(&config.cells[c], config.base_seed, r)
                .map_err(|e| e.to_string());
            ((c, r), outcome)
        })
        .collect();
    outcomes.sort_by_key(|((c, r), _)| (*c, *r));

    let mut cells: Vec<CellResult> = config
        .cells
        .iter()
        .map(|spec| CellResult {
            spec: spec.clone(),
            replicates: Vec::with_capacity(config.replicates),
        })
        .collect();
    for ((c, _), outcome) in outcomes {
        cells[c].replicates.push(outcome);
    }
    SuiteResult { cells }
}

/// Iteration-wise gap summaries for every cell, skipping failed replicates.
pub fn summarize_suite(result: &SuiteResult) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for cell in &result.cells {
        let gaps: Vec<Vec<f64>> = cell
            .replicates
            .iter()
            .filter_map(|r| r.as_ref().ok().map(|run| run.gaps.clone()))
            .collect();
        rows.extend(summarize_gaps(&cell.spec.id, &gaps));
    }
    rows
}

pub fn trace_meta_for(cell: &CellSpec, run: &ReplicateRun) -> TraceMeta {
    TraceMeta {
        cell_id: cell.id.clone(),
        objective: cell.objective.clone(),
        ambient_dim: cell.ambient_dim,
        low_dim: cell.low_dim,
        method: cell.method.to_string(),
        kernel: cell.kernel.to_string(),
        warp: cell.warp.to_string(),
        run_seed: run.seed,
        replicate: run.replicate,
        f_star: run.objective.f_star(),
        active_coords: run.objective.active_coords().to_vec(),
        design_fallback: run.record.design_fallback,
        outside_fraction: run.record.outside_fraction,
    }
}

pub fn trace_path(out_dir: &Path, cell_id: &str, replicate: usize) -> PathBuf {
    out_dir.join(cell_id).join(format!("rep_{replicate:02}.trace.csv"))
}

pub fn embedding_path(out_dir: &Path, cell_id: &str, replicate: usize) -> PathBuf {
    out_dir
        .join(cell_id)
        .join(format!("rep_{replicate:02}.embedding.txt"))
}

/// Runs a suite and persists everything under `out_dir`: per-replicate trace
/// and embedding files, failure markers, and `summary.csv`.
pub fn run_suite_to_dir(config: &SuiteConfig, out_dir: &Path) -> Result<SuiteResult, BenchError> {
    fs::create_dir_all(out_dir)?;
    let result = run_suite(config);
    for cell in &result.cells {
        let cell_dir = out_dir.join(&cell.spec.id);
        fs::create_dir_all(&cell_dir)?;
        for (r, outcome) in cell.replicates.iter().enumerate() {
            match outcome {
                Ok(run) => {
                    let meta = trace_meta_for(&cell.spec, run);
                    let text = trace_to_string(&meta, &run.record, config.trace_x)?;
                    fs::write(trace_path(out_dir, &cell.spec.id, r), text)?;
                    if let Some(e) = &run.record.embedding {
                        e.save(embedding_path(out_dir, &cell.spec.id, r))
                            .map_err(|e| BenchError::Config(e.to_string()))?;
                    }
                }
                Err(msg) => {
                    fs::write(
                        cell_dir.join(format!("rep_{r:02}.failed")),
                        format!("{msg}\n"),
                    )?;
                }
            }
        }
    }
    let rows = summarize_suite(&result);
    let mut buf = Vec::new();
    crate::trace::write_summary_csv(&mut buf, &rows)?;
    fs::write(out_dir.join("summary.csv"), buf)?;
    Ok(result)
}

/// Rebuilds the summary from the trace files in a run directory (the
/// independent aggregation path used by the `summarize` subcommand).
pub fn summarize_dir(out_dir: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    let mut cells: Vec<(String, Vec<(usize, Vec<f64>)>)> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for cell_dir in entries {
        let cell_id = cell_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let mut traces: Vec<PathBuf> = fs::read_dir(&cell_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(".trace.csv"))
            })
            .collect();
        traces.sort();
        let mut histories = Vec::new();
        for path in traces {
            let file = fs::File::open(&path)?;
            let (meta, rows) = read_trace(&mut std::io::BufReader::new(file))?;
            let gaps: Vec<f64> = rows.iter().map(|r| r.best_f - meta.f_star).collect();
            histories.push((meta.replicate, gaps));
        }
        if !histories.is_empty() {
            histories.sort_by_key(|(rep, _)| *rep);
            cells.push((cell_id, histories));
        }
    }
    let mut out = Vec::new();
    for (cell_id, histories) in cells {
        let gaps: Vec<Vec<f64>> = histories.into_iter().map(|(_, g)| g).collect();
        out.extend(summarize_gaps(&cell_id, &gaps));
    }
    Ok(out)
}
