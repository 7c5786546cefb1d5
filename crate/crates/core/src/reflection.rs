//! Pointwise reflection: the two-sided projection used between nodes, the
//! maximal-fixed-point rule at jump times, and the Skorokhod audits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::integrate_against;
use crate::solution::{NodeField, SkorokhodDiagnostics, Solution};

/// Points in the descending scan of `Φ(x) − x`.
pub const SCAN_POINTS: usize = 256;
pub const JUMP_TOL: f64 = 1e-12;
const BISECTION_BUDGET: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub value: f64,
    pub dk_plus: f64,
    pub dk_minus: f64,
}

pub fn skorokhod_project(ytilde: f64, lower: f64, upper: f64) -> Result<ProjectionResult> {
    if lower.is_nan() || upper.is_nan() || lower > upper {
        return Err(Error::InvalidInput(format!(
            "projection needs L <= U, got L = {lower}, U = {upper}"
        )));
    }
    if ytilde.is_nan() {
        return Err(Error::InvalidInput("projection of NaN".into()));
    }
    Ok(if ytilde < lower {
        ProjectionResult {
            value: lower,
            dk_plus: lower - ytilde,
            dk_minus: 0.0,
        }
    } else if ytilde > upper {
        ProjectionResult {
            value: upper,
            dk_plus: 0.0,
            dk_minus: ytilde - upper,
        }
    } else {
        ProjectionResult {
            value: ytilde,
            dk_plus: 0.0,
            dk_minus: 0.0,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpReflection {
    pub y_left: f64,
    pub dk_plus: f64,
    pub dk_minus: f64,
    /// `w = Y_t + h(t, x*, Y_t) + ΔR` at the accepted point.
    pub pre: f64,
    /// `|Φ(x*) − x*|`.
    pub residual: f64,
}

/// Left limit at a jump time: the largest `x ∈ [L₋, U₋]` with
/// `x = L₋ ∨ [Y_t + h(x) + ΔR] ∧ U₋`, where `h(x)` stands for `h(t, x, Y_t)`.
///
/// `Y_left` is returned as `Φ(x*)` and the increments are the closed-form
/// `(L₋ − w)⁺` and `(w − U₋)⁺`, so the three jump identities agree exactly.
pub fn jump_reflect(
    y_t: f64,
    h: &dyn Fn(f64) -> f64,
    delta_r: f64,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<JumpReflection> {
    if lower.is_nan() || upper.is_nan() || lower > upper {
        return Err(Error::InvalidInput(format!(
            "jump reflection needs L- <= U-, got L- = {lower}, U- = {upper}"
        )));
    }
    let w_of = |x: f64| y_t + h(x) + delta_r;
    let finish = |x: f64| -> Result<JumpReflection> {
        let w = w_of(x);
        let p = skorokhod_project(w, lower, upper)?;
        Ok(JumpReflection {
            y_left: p.value,
            dk_plus: p.dk_plus,
            dk_minus: p.dk_minus,
            pre: w,
            residual: (p.value - x).abs(),
        })
    };
    if lower == upper {
        return finish(lower);
    }
    if !lower.is_finite() || !upper.is_finite() {
        return Err(Error::Unsupported(
            "jump reflection with a jump coefficient needs finite left barriers".into(),
        ));
    }
    let phi = |x: f64| w_of(x).clamp(lower, upper);
    let gap = |x: f64| phi(x) - x;

    let step = (upper - lower) / (SCAN_POINTS - 1) as f64;
    let mut hi = upper;
    if gap(hi) >= 0.0 {
        return finish(hi);
    }
    let mut lo = lower;
    for j in 1..SCAN_POINTS {
        let x = if j == SCAN_POINTS - 1 {
            lower
        } else {
            upper - j as f64 * step
        };
        if gap(x) >= 0.0 {
            lo = x;
            break;
        }
        hi = x;
    }
    // Invariant: gap(lo) >= 0 > gap(hi).
    for _ in 0..BISECTION_BUDGET {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let out = finish(lo)?;
    if out.residual > tol {
        return Err(Error::NoFixedPoint {
            lower,
            upper,
            residual: out.residual,
        });
    }
    Ok(out)
}

fn contributions(sol: &Solution, lower: bool) -> NodeField {
    let (cont, jump) = if lower {
        (&sol.kp_cont, &sol.kp_jump)
    } else {
        (&sol.km_cont, &sol.km_jump)
    };
    let term = |gap: f64, dk: f64| if dk == 0.0 { 0.0 } else { gap * dk };
    (0..sol.nodes())
        .map(|i| {
            (0..sol.states(i))
                .map(|k| {
                    let (gap_r, gap_l) = if lower {
                        (
                            sol.y[i][k] - sol.lower[i][k],
                            sol.y_left[i][k] - sol.lower_left[i][k],
                        )
                    } else {
                        (
                            sol.upper[i][k] - sol.y[i][k],
                            sol.upper_left[i][k] - sol.y_left[i][k],
                        )
                    };
                    let c = if i + 1 < sol.nodes() {
                        term(gap_r, cont[i][k])
                    } else {
                        0.0
                    };
                    let j = if i > 0 { term(gap_l, jump[i][k]) } else { 0.0 };
                    c + j
                })
                .collect()
        })
        .collect()
}

/// Worst path values of `∫(Y₋ − L₋)dK⁺` and `∫(U₋ − Y₋)dK⁻`, using the
/// barrier values recorded in the solution.
pub fn check_minimality(sol: &Solution) -> (f64, f64) {
    (
        sol.path_max(&contributions(sol, true)),
        sol.path_max(&contributions(sol, false)),
    )
}

/// Minimality residuals along one path, through [`integrate_against`].
pub fn check_minimality_along(sol: &Solution, states: &[usize]) -> Result<(f64, f64)> {
    let lo = integrate_against(&sol.lower_gap_path(states), &sol.k_plus_path(states))?;
    let up = integrate_against(&sol.upper_gap_path(states), &sol.k_minus_path(states))?;
    Ok((lo, up))
}

/// Largest `min(ΔK⁺, ΔK⁻)` over every continuous and jump atom.
pub fn check_singularity(sol: &Solution) -> f64 {
    let mut worst: f64 = 0.0;
    for (p, m) in [(&sol.kp_cont, &sol.km_cont), (&sol.kp_jump, &sol.km_jump)] {
        for (rp, rm) in p.iter().zip(m) {
            for (a, b) in rp.iter().zip(rm) {
                worst = worst.max(a.min(*b));
            }
        }
    }
    worst
}

pub fn skorokhod_diagnostics(sol: &Solution) -> SkorokhodDiagnostics {
    let (lower_residual, upper_residual) = check_minimality(sol);
    let mass: NodeField = (0..sol.nodes())
        .map(|i| {
            (0..sol.states(i))
                .map(|k| {
                    let c = if i + 1 < sol.nodes() {
                        sol.kp_cont[i][k] + sol.km_cont[i][k]
                    } else {
                        0.0
                    };
                    c + sol.kp_jump[i][k] + sol.km_jump[i][k]
                })
                .collect()
        })
        .collect();
    let mut violation: f64 = 0.0;
    for i in 0..sol.nodes() {
        for k in 0..sol.states(i) {
            if i + 1 < sol.nodes() {
                violation = violation
                    .max(sol.lower[i][k] - sol.y[i][k])
                    .max(sol.y[i][k] - sol.upper[i][k]);
            }
            if i > 0 {
                violation = violation
                    .max(sol.lower_left[i][k] - sol.y_left[i][k])
                    .max(sol.y_left[i][k] - sol.upper_left[i][k]);
            }
        }
    }
    SkorokhodDiagnostics {
        lower_residual,
        upper_residual,
        singularity: check_singularity(sol),
        k_mass: sol.path_max(&mass),
        barrier_violation: violation,
    }
}
