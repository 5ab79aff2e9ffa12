//! Global optimization of expensive high-dimensional black-box functions
//! under the low-effective-dimensionality hypothesis: random embeddings,
//! zonotope back-projection, warped Gaussian-process surrogates, and an
//! expected-improvement search loop, plus a benchmark harness.

pub mod acquisition;
pub mod config;
pub mod diagnostics;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod kernel;
pub mod mappings;
pub mod montecarlo;
pub mod objectives;
pub mod suite;
pub mod trace;
mod util;

pub use acquisition::{
    ei_ext, expected_improvement, initial_design, maximize_acquisition, AcquisitionOutcome,
    DesignOutcome,
};
pub use config::{parse_suite_config, CellSpec, MethodSpec, SuiteConfig};
pub use embedding::{convex_project, orth_project, Embedding, RowMode};
pub use engine::{
    random_search_run, rembo_run, FnObjective, Incumbent, IterationRecord, MappingChoice,
    ObjectiveFn, RunConfig, RunRecord,
};
pub use objectives::{known_objectives, make_objective, Objective};
pub use suite::{run_suite, run_suite_to_dir, summarize_dir, summarize_suite, SuiteResult};
pub use trace::{SummaryRow, TraceMeta};
pub use error::{BenchError, EmbeddingError, EngineError, GeometryError, GpError, MappingError};
pub use geometry::{
    enclosing_half_widths, in_parallelotope_union, in_strip_intersection, in_zonotope,
    phi_preimage, BoxDomain, Parallelotope, Strip, ZonotopeDomain, FEASIBILITY_TOL,
};
pub use gp::{fit, FitOptions, GpModel};
pub use kernel::{kernel_eval, KernelFamily, KernelSpec, Lengthscales, Warp};
pub use mappings::{gamma, phi, psi_prime_warp, psi_warp, MappingKind};
pub use montecarlo::{monte_carlo_volume, monte_carlo_weighted_volume, VolumeEstimate};
pub use util::{mix_seed, seed_stream};
