//! Backward solvers for the discretized equation in four regimes, and the
//! Dynkin-game oracle.

mod backend;
mod dynkin;
mod regimes;
mod sweep;

pub use backend::{Backend, BackendSpec};
pub use dynkin::{dynkin_value_bruteforce, strategy_count, EXHAUSTIVE_DEPTH, MAX_DYNKIN_DEPTH};
pub use regimes::{
    ladder_solutions, solve_concatenated, solve_general, solve_lipschitz_picard,
    solve_zero_generator, HistoryRow, Regime, SolveReport, MONOTONE_FLAG_TOL, TREE_MONOTONE_NOISE,
};
pub use sweep::{step_backward, SolveCounters, StepOutput, Stepping};
