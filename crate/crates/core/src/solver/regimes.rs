use serde::Serialize;

use super::backend::{Backend, BackendSpec};
use super::sweep::{check_compatible, SolveCounters, Stepping, Sweep};
use crate::approx::ladder_level;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::reflection::skorokhod_diagnostics;
use crate::solution::{SkorokhodDiagnostics, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Zero,
    Picard,
    Concatenated,
    General,
}

/// One row of a convergence history: a Picard iterate or a ladder level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub n: usize,
    /// `sup |Yⁿ − Yⁿ⁻¹|` over nodes, states and both one-sided values.
    pub sup_gap: f64,
    /// Ratio of successive gaps (Picard only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Ladder only: whether `Yⁿ ≤ Yⁿ⁻¹ + 1e-12` held everywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excess: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub regime: Regime,
    pub backend: BackendSpec,
    pub stepping: Stepping,
    pub solution: Solution,
    pub history: Vec<HistoryRow>,
    pub diagnostics: SkorokhodDiagnostics,
    pub counters: SolveCounters,
    pub converged: bool,
}

/// Ladder excess treated as a comparison failure on the tree.
pub const TREE_MONOTONE_NOISE: f64 = 1e-9;
/// Reported ladder flag threshold.
pub const MONOTONE_FLAG_TOL: f64 = 1e-12;

fn report(
    regime: Regime,
    backend: &Backend,
    stepping: Stepping,
    solution: Solution,
    history: Vec<HistoryRow>,
    counters: SolveCounters,
    converged: bool,
) -> SolveReport {
    let diagnostics = skorokhod_diagnostics(&solution);
    SolveReport {
        regime,
        backend: backend.spec(),
        stepping,
        solution,
        history,
        diagnostics,
        counters,
        converged,
    }
}

pub fn solve_zero_generator(c: &CoefficientSet, backend: &Backend) -> Result<SolveReport> {
    if !c.is_zero_generator() {
        return Err(Error::InvalidInput(
            "zero-generator regime needs f = g = h = 0".into(),
        ));
    }
    check_compatible(c, backend)?;
    let mut sweep = Sweep::new(c, backend, Stepping::Explicit);
    let sol = sweep.full()?;
    Ok(report(
        Regime::Zero,
        backend,
        Stepping::Explicit,
        sol,
        Vec::new(),
        sweep.counters,
        true,
    ))
}

fn require_lipschitz(c: &CoefficientSet) -> Result<()> {
    if c.has_generators() && c.lipschitz().is_none() {
        return Err(Error::InvalidInput(
            "f and g need a declared Lipschitz constant in this regime".into(),
        ));
    }
    Ok(())
}

/// Picard iteration with `(Yⁿ, Zⁿ)` frozen inside `f` and `g`, starting
/// from `Y⁰ = Z⁰ = 0`. Stops once the sup-norm gap is at most `tol`.
pub fn solve_lipschitz_picard(
    c: &CoefficientSet,
    backend: &Backend,
    max_iter: usize,
    tol: f64,
    stepping: Stepping,
) -> Result<SolveReport> {
    if c.jump().is_some() {
        return Err(Error::InvalidInput("Picard regime needs h = 0".into()));
    }
    require_lipschitz(c)?;
    check_compatible(c, backend)?;
    let ens = backend.ensemble();
    let mut prev = Solution::empty(ens.topology(), ens.grid().nodes().to_vec());
    let mut counters = SolveCounters::default();
    let mut history: Vec<HistoryRow> = Vec::new();
    for n in 1..=max_iter {
        let mut sweep = Sweep::new(c, backend, stepping);
        sweep.frozen = Some(&prev);
        let sol = sweep.full()?;
        counters.absorb(&sweep.counters);
        let gap = sol.sup_gap(&prev)?;
        let ratio = history
            .last()
            .filter(|r| r.sup_gap > 0.0)
            .map(|r| gap / r.sup_gap);
        history.push(HistoryRow {
            n,
            sup_gap: gap,
            ratio,
            monotone: None,
            excess: None,
        });
        if gap <= tol {
            return Ok(report(
                Regime::Picard,
                backend,
                stepping,
                sol,
                history,
                counters,
                true,
            ));
        }
        prev = sol;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        gap: history.last().map_or(f64::NAN, |r| r.sup_gap),
    })
}

fn concatenated(
    c: &CoefficientSet,
    backend: &Backend,
    stepping: Stepping,
) -> Result<(Solution, SolveCounters)> {
    let mut sweep = Sweep::new(c, backend, stepping);
    let mut sol = sweep.init();
    let last = sol.nodes() - 1;
    // Segment ends: the marks S_1 < … < S_p and T, handled from the last.
    let mut ends: Vec<usize> = c
        .grid()
        .sorted_marks()
        .into_iter()
        .filter(|&m| m < last)
        .collect();
    ends.insert(0, 0);
    ends.push(last);
    for w in ends.windows(2).rev() {
        sweep.segment(&mut sol, w[0], w[1])?;
    }
    sweep.counters.sweeps += 1;
    Ok((sol, sweep.counters))
}

/// Backward induction between consecutive marks; at each mark the left
/// limit is the maximal fixed point of the jump reflection.
pub fn solve_concatenated(
    c: &CoefficientSet,
    backend: &Backend,
    stepping: Stepping,
) -> Result<SolveReport> {
    require_lipschitz(c)?;
    check_compatible(c, backend)?;
    let (sol, counters) = concatenated(c, backend, stepping)?;
    Ok(report(
        Regime::Concatenated,
        backend,
        stepping,
        sol,
        Vec::new(),
        counters,
        true,
    ))
}

/// Solves levels `0..=n_max` of the approximation ladder and returns the
/// last one. Levels must decrease; on the tree an increase above
/// [`TREE_MONOTONE_NOISE`] is an error.
pub fn solve_general(
    c: &CoefficientSet,
    backend: &Backend,
    n_max: usize,
    tol: f64,
    stepping: Stepping,
) -> Result<SolveReport> {
    check_compatible(c, backend)?;
    let hard_limit = match backend.spec() {
        BackendSpec::Tree => Some(TREE_MONOTONE_NOISE),
        BackendSpec::Lsmc { .. } => None,
    };
    let mut counters = SolveCounters::default();
    let mut history = Vec::new();
    let mut prev: Option<Solution> = None;
    let mut converged = false;
    for n in 0..=n_max {
        let level = ladder_level(c, n)?;
        let (sol, cnt) = concatenated(level.coefficients(), backend, stepping)?;
        counters.absorb(&cnt);
        if let Some(p) = &prev {
            let gap = sol.sup_gap(p)?;
            let (excess, node, _) = sol.max_excess_over(p)?;
            let left_excess = sol
                .y_left
                .iter()
                .zip(&p.y_left)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
                .fold(f64::NEG_INFINITY, f64::max);
            let excess = excess.max(left_excess);
            if let Some(limit) = hard_limit {
                if excess > limit {
                    return Err(Error::Monotonicity {
                        level: n,
                        node,
                        excess,
                    });
                }
            }
            history.push(HistoryRow {
                n,
                sup_gap: gap,
                ratio: None,
                monotone: Some(excess <= MONOTONE_FLAG_TOL),
                excess: Some(excess),
            });
            if gap <= tol {
                converged = true;
                prev = Some(sol);
                break;
            }
        } else {
            history.push(HistoryRow {
                n,
                sup_gap: 0.0,
                ratio: None,
                monotone: Some(true),
                excess: None,
            });
        }
        prev = Some(sol);
    }
    let sol = prev.expect("at least level 0 is solved");
    Ok(report(
        Regime::General,
        backend,
        stepping,
        sol,
        history,
        counters,
        converged,
    ))
}

/// All ladder levels `0..=n_max` without early stopping, for studies of
/// the ordering itself.
pub fn ladder_solutions(
    c: &CoefficientSet,
    backend: &Backend,
    n_max: usize,
    stepping: Stepping,
) -> Result<Vec<Solution>> {
    check_compatible(c, backend)?;
    (0..=n_max)
        .map(|n| {
            let level = ladder_level(c, n)?;
            concatenated(level.coefficients(), backend, stepping).map(|(s, _)| s)
        })
        .collect()
}
