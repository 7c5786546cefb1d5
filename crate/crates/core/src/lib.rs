//! Numerical laboratory for generalized backward SDEs with two rcll
//! reflecting barriers, jump reflection and quadratic-growth generators.
//!
//! The crate covers time grids and Brownian backends, the reflection
//! calculus, the exponential change of variables, the Lipschitz
//! approximation ladder, backward solvers in four regimes, and executable
//! comparison checks.

pub mod approx;
pub mod brownian;
pub mod coefficients;
pub mod comparison;
pub mod error;
pub mod grid;
pub mod process;
pub mod reflection;
pub mod solution;
pub mod solver;
pub mod transform;

pub use brownian::{simulate_ensemble, BrownianEnsemble, EnsembleMode, Topology};
pub use coefficients::{Barrier, CoefficientSet, NodeCtx, SemimartingaleWitness, Witnesses};
pub use comparison::{
    check_comparison, validate_hypotheses, ComparisonCase, ComparisonReport, HypothesisBundle,
    HypothesisReport,
};
pub use error::{Error, Result};
pub use grid::{build_grid, TimeGrid};
pub use process::{
    integrate_against, total_variation, truncation_time, FiniteVariationPath, RcllPath,
};
pub use reflection::{jump_reflect, skorokhod_project, JumpReflection, ProjectionResult};
pub use solution::{NodeField, SkorokhodDiagnostics, Solution};
pub use solver::{
    dynkin_value_bruteforce, solve_concatenated, solve_general, solve_lipschitz_picard,
    solve_zero_generator, step_backward, Backend, BackendSpec, HistoryRow, Regime, SolveReport,
    Stepping,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
