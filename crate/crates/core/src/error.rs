use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("time {t} is not a grid node")]
    OffGrid { t: f64 },

    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("barrier order violated at node {node} (t = {t}, state {state}): lower {lower} > upper {upper}")]
    BarrierOrder {
        node: usize,
        t: f64,
        state: usize,
        lower: f64,
        upper: f64,
    },

    #[error("no fixed point within tolerance on [{lower}, {upper}] (best residual {residual})")]
    NoFixedPoint {
        lower: f64,
        upper: f64,
        residual: f64,
    },

    #[error("regression rank deficient at step {step}")]
    RankDeficient { step: usize },

    #[error("no convergence after {iterations} iterations (last gap {gap})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("ladder monotonicity violated at level {level}, node {node}: excess {excess}")]
    Monotonicity {
        level: usize,
        node: usize,
        excess: f64,
    },

    #[error("transform: {0}")]
    Transform(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
