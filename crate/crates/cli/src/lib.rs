//! Scenario runner: parses scenario files, dispatches to the solver
//! regimes and harnesses, and writes deterministic artifacts.

pub mod catalog;
pub mod checks;
pub mod error;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use run::{execute, run, Artifacts, RunOptions, RunOutcome};
pub use scenario::Scenario;
