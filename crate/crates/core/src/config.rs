//! Suite configuration files: TOML with suite-level keys and one `[[cell]]`
//! section per experiment cell.
//!
//! ```toml
//! replicates = 25
//! base_seed = 42
//!
//! [[cell]]
//! id = "branin-25-gamma-kpsi"
//! objective = "branin"
//! ambient_dim = 25
//! low_dim = 2
//! budget = 100
//! method = "rembo-gamma"      # rembo-gamma | rembo-phi | random-search
//! kernel = "matern52"         # matern52 | squared-exponential
//! warp = "projected"          # none | mapped | projected
//! ```

use serde::{Deserialize, Serialize};

use crate::embedding::RowMode;
use crate::error::BenchError;
use crate::kernel::{KernelFamily, Warp};
use crate::objectives::{known_objectives, make_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSpec {
    RemboGamma,
    RemboPhi,
    RandomSearch,
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodSpec::RemboGamma => write!(f, "rembo-gamma"),
            MethodSpec::RemboPhi => write!(f, "rembo-phi"),
            MethodSpec::RandomSearch => write!(f, "random-search"),
        }
    }
}

/// One experiment cell: an objective instance family crossed with a method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub id: String,
    pub objective: String,
    pub ambient_dim: usize,
    pub low_dim: usize,
    pub budget: usize,
    #[serde(default)]
    pub n0: Option<usize>,
    pub method: MethodSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    #[serde(default = "default_warp")]
    pub warp: Warp,
    #[serde(default = "default_row_mode")]
    pub row_mode: RowMode,
    #[serde(default)]
    pub acquisition_restarts: Option<usize>,
    #[serde(default = "default_refit_every")]
    pub refit_every: usize,
}

fn default_kernel() -> KernelFamily {
    KernelFamily::Matern52
}

fn default_warp() -> Warp {
    Warp::Projected
}

fn default_row_mode() -> RowMode {
    RowMode::Gaussian
}

fn default_refit_every() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Include ambient coordinates in trace rows.
    #[serde(default)]
    pub trace_x: bool,
    #[serde(rename = "cell")]
    pub cells: Vec<CellSpec>,
}

fn default_replicates() -> usize {
    25
}

/// Parses and validates a suite config; parse errors carry the offending
/// line and field from the TOML reader.
pub fn parse_suite_config(text: &str) -> Result<SuiteConfig, BenchError> {
    let config: SuiteConfig =
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &SuiteConfig) -> Result<(), BenchError> {
    if config.cells.is_empty() {
        return Err(BenchError::Config("config declares no [[cell]]".into()));
    }
    if config.replicates == 0 {
        return Err(BenchError::Config("replicates must be at least 1".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for cell in &config.cells {
        if cell.id.is_empty() || cell.id.contains(['/', '\\', ',']) {
            return Err(BenchError::Config(format!(
                "cell id '{}' must be nonempty and free of path/CSV separators",
                cell.id
            )));
        }
        if !seen.insert(cell.id.clone()) {
            return Err(BenchError::Config(format!("duplicate cell id '{}'", cell.id)));
        }
        if !known_objectives().contains(&cell.objective.as_str()) {
            return Err(BenchError::Config(format!(
                "cell '{}': unknown objective '{}' (known: {})",
                cell.id,
                cell.objective,
                known_objectives().join(", ")
            )));
        }
        // instantiating checks the dimension constraint
        make_objective(&cell.objective, cell.ambient_dim, 0)
            .map_err(|e| BenchError::Config(format!("cell '{}': {e}", cell.id)))?;
        if cell.low_dim == 0 || cell.low_dim > cell.ambient_dim {
            return Err(BenchError::Config(format!(
                "cell '{}': need 1 <= low_dim <= ambient_dim",
                cell.id
            )));
        }
        let n0 = cell.n0.unwrap_or_else(|| 4.max(2 * cell.low_dim));
        if cell.method != MethodSpec::RandomSearch && n0 >= cell.budget {
            return Err(BenchError::Config(format!(
                "cell '{}': design size {} must be below the budget {}",
                cell.id, n0, cell.budget
            )));
        }
        if cell.budget == 0 {
            return Err(BenchError::Config(format!(
                "cell '{}': budget must be positive",
                cell.id
            )));
        }
    }
    Ok(())
}

pub fn render_config(config: &SuiteConfig) -> String {
    toml::to_string_pretty(config).expect("suite config serializes")
}
