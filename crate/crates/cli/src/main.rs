//! `rembo` command-line interface: run benchmark suites, replay single
//! replicates, re-aggregate summaries, and run geometry self-tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rembo_core::config::{parse_suite_config, render_config, SuiteConfig};
use rembo_core::diagnostics::run_geometry_selftests;
use rembo_core::error::BenchError;
use rembo_core::suite::{
    run_cell_replicate, run_suite_to_dir, summarize_dir, trace_meta_for, trace_path,
};
use rembo_core::trace::{trace_to_string, traces_match_ignoring_time, write_summary_csv};

#[derive(Parser)]
#[command(name = "rembo", version, about = "Random-embedding Bayesian optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a suite from a config file and persist traces + summary.
    Run {
        /// Suite config (TOML; see the README for the grammar).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for traces, embeddings and summary.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Include ambient x coordinates in trace rows.
        #[arg(long, value_enum)]
        trace_x: Option<Switch>,
    },
    /// Re-run one replicate of a stored run and verify the traces match
    /// (the wall-clock column is ignored).
    Replay {
        /// Directory produced by `run` (must contain config.toml).
        #[arg(long)]
        out: PathBuf,
        /// Replicate index to re-run.
        #[arg(long)]
        seed: usize,
        /// Restrict to one cell id.
        #[arg(long)]
        cell: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute summary.csv from the trace files in a run directory.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometry self-tests: orthonormality, membership vs an exhaustive
    /// oracle, enclosing box vs enumeration, round trips, volume ratios.
    Diagnose {
        #[arg(long, default_value_t = 2)]
        low_dim: usize,
        #[arg(long, default_value_t = 5)]
        high_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo samples for the volume checks.
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Exit code 1: configuration problems. Exit code 2: runtime failures.
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) | BenchError::UnknownObjective(_) | BenchError::AmbientTooSmall { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn configure_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // a later duplicate initialization is fine to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(path: &Path) -> Result<SuiteConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_suite_config(&text).map_err(CliError::from)
}

fn cmd_run(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    jobs: Option<usize>,
    trace_x: Option<Switch>,
) -> Result<(), CliError> {
    configure_pool(jobs);
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.base_seed = s;
    }
    if let Some(t) = trace_x {
        config.trace_x = matches!(t, Switch::On);
    }
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;
    // persist the resolved config so the directory replays standalone
    fs::write(out.join("config.toml"), render_config(&config))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let result = run_suite_to_dir(&config, out).map_err(CliError::from)?;
    let mut failures = 0usize;
    for cell in &result.cells {
        let ok = cell.replicates.iter().filter(|r| r.is_ok()).count();
        let total = cell.replicates.len();
        failures += total - ok;
        println!("cell {:<30} {ok}/{total} replicates ok", cell.spec.id);
    }
    println!("summary: {}", out.join("summary.csv").display());
    if failures > 0 {
        Err(CliError::Runtime(format!("{failures} replicates failed")))
    } else {
        Ok(())
    }
}

fn cmd_replay(
    out: &Path,
    replicate: usize,
    cell_filter: Option<&str>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    configure_pool(jobs);
    let config = load_config(&out.join("config.toml"))?;
    if replicate >= config.replicates {
        return Err(CliError::Config(format!(
            "replicate {replicate} out of range (config has {})",
            config.replicates
        )));
    }
    let mut mismatches = 0usize;
    for cell in config
        .cells
        .iter()
        .filter(|c| cell_filter.is_none_or(|f| f == c.id))
    {
        let stored_path = trace_path(out, &cell.id, replicate);
        let stored = fs::read_to_string(&stored_path).map_err(|e| {
            CliError::Runtime(format!("cannot read {}: {e}", stored_path.display()))
        })?;
        let run = run_cell_replicate(cell, config.base_seed, replicate).map_err(CliError::from)?;
        let meta = trace_meta_for(cell, &run);
        let fresh = trace_to_string(&meta, &run.record, config.trace_x).map_err(CliError::from)?;
        if traces_match_ignoring_time(&stored, &fresh) {
            println!("cell {:<30} replicate {replicate}: identical", cell.id);
        } else {
            println!("cell {:<30} replicate {replicate}: MISMATCH", cell.id);
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        Err(CliError::Runtime(format!("{mismatches} trace mismatches")))
    } else {
        Ok(())
    }
}

fn cmd_summarize(out: &Path) -> Result<(), CliError> {
    let rows = summarize_dir(out).map_err(CliError::from)?;
    if rows.is_empty() {
        return Err(CliError::Runtime(format!(
            "no trace files found under {}",
            out.display()
        )));
    }
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &rows).map_err(CliError::from)?;
    fs::write(out.join("summary.csv"), buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} rows to {}",
        rows.len(),
        out.join("summary.csv").display()
    );
    Ok(())
}

fn cmd_diagnose(low_dim: usize, high_dim: usize, seed: u64, samples: u64, jobs: Option<usize>) -> Result<(), CliError> {
    configure_pool(jobs);
    if low_dim == 0 || low_dim > high_dim {
        return Err(CliError::Config(format!(
            "need 1 <= low-dim <= high-dim, got {low_dim} and {high_dim}"
        )));
    }
    let results = run_geometry_selftests(low_dim, high_dim, seed, samples);
    let mut failed = 0usize;
    for t in &results {
        let tag = if t.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {:<32} {}", t.name, t.details);
        if !t.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        Err(CliError::Runtime(format!("{failed} self-tests failed")))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
            trace_x,
        } => cmd_run(config, out, *seed, *jobs, *trace_x),
        Command::Replay {
            out,
            seed,
            cell,
            jobs,
        } => cmd_replay(out, *seed, cell.as_deref(), *jobs),
        Command::Summarize { out } => cmd_summarize(out),
        Command::Diagnose {
            low_dim,
            high_dim,
            seed,
            samples,
            jobs,
        } => cmd_diagnose(*low_dim, *high_dim, *seed, *samples, *jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}
