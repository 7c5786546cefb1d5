//! Post-solve audits shared by `run` and the acceptance suite.

use grbsde_core::transform::{
    build_m, forward_solution, forward_transform, inverse_transform, verify_bounds, BoundReport,
};
use grbsde_core::{BrownianEnsemble, CoefficientSet, SkorokhodDiagnostics, Solution, Topology};
use serde::Serialize;

use crate::error::CliError;

/// Tolerance for the three jump identities.
pub const JUMP_IDENTITY_TOL: f64 = 1e-10;
/// Tolerance between the solver's left limit and the scan oracle.
pub const FIXED_POINT_TOL: f64 = 1e-9;
pub const ROUND_TRIP_TOL: f64 = 1e-10;

const ORACLE_POINTS: usize = 20_001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkorokhodCheck {
    #[serde(flatten)]
    pub diagnostics: SkorokhodDiagnostics,
    /// `10·Δt·(total K mass)`, the allowance for both residuals.
    pub residual_limit: f64,
    pub passed: bool,
}

pub fn skorokhod_check(d: SkorokhodDiagnostics, max_dt: f64) -> SkorokhodCheck {
    let limit = 10.0 * max_dt * d.k_mass;
    let passed = d.lower_residual <= limit
        && d.upper_residual <= limit
        && d.singularity == 0.0
        && d.barrier_violation <= 1e-12;
    SkorokhodCheck {
        diagnostics: d,
        residual_limit: limit,
        passed,
    }
}

pub fn max_dt(sol: &Solution) -> f64 {
    sol.times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
}

/// Largest `x ∈ [lo, up]` with `x = clip(w(x))`, by a dense descending scan
/// followed by bisection.
pub fn scan_fixed_point(w: &dyn Fn(f64) -> f64, lo: f64, up: f64) -> Option<f64> {
    let gap = |x: f64| w(x).clamp(lo, up) - x;
    if gap(up) >= 0.0 {
        return Some(up);
    }
    let mut prev = up;
    for j in 1..ORACLE_POINTS {
        // The last point is `lo` exactly, where the gap is never negative.
        let x = if j + 1 == ORACLE_POINTS {
            lo
        } else {
            up - (up - lo) * j as f64 / (ORACLE_POINTS - 1) as f64
        };
        if gap(x) >= 0.0 {
            let (mut a, mut b) = (x, prev);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if gap(mid) >= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(a);
        }
        prev = x;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct JumpAudit {
    /// Node-state atoms examined (every node after 0).
    pub atoms: usize,
    /// Atoms at nodes where the jump coefficient acts.
    pub mark_atoms: usize,
    pub worst_identity: f64,
    pub worst_fixed_point: f64,
    pub passed: bool,
}

/// Checks `ΔK⁺ = (L₋ − w)⁺`, `ΔK⁻ = (w − U₋)⁺` and `Y₋ = w + ΔK⁺ − ΔK⁻`
/// with `w = Y + h(Y₋, Y) + forcing`, and compares `Y₋` with the largest
/// fixed point found by [`scan_fixed_point`].
///
/// `c` must be the set the solution was computed with (a ladder level for
/// the general regime).
pub fn audit_jumps(c: &CoefficientSet, ens: &BrownianEnsemble, sol: &Solution) -> JumpAudit {
    let mut a = JumpAudit::default();
    for i in 1..sol.nodes() {
        let is_mark = sol.marks.contains(&i);
        for k in 0..sol.states(i) {
            let ctx = c.ctx(i, ens.b(i, k));
            let y = sol.y[i][k];
            let yl = sol.y_left[i][k];
            let forcing = sol.jumps.forcing[i][k];
            let (lo, up) = (sol.lower_left[i][k], sol.upper_left[i][k]);
            let hv = |x: f64| if is_mark { c.h(&ctx, x, y) } else { 0.0 };
            let w = y + hv(yl) + forcing;
            let dkp = sol.kp_jump[i][k];
            let dkm = sol.km_jump[i][k];
            let e = [
                (dkp - (lo - w).max(0.0)).abs(),
                (dkm - (w - up).max(0.0)).abs(),
                (yl - (w + dkp - dkm)).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            a.worst_identity = a.worst_identity.max(e);
            let oracle = if is_mark && lo < up {
                scan_fixed_point(&|x| y + hv(x) + forcing, lo, up)
            } else {
                Some(w.clamp(lo, up))
            };
            let fp = oracle.map_or(f64::INFINITY, |o| (o - yl).abs());
            a.worst_fixed_point = a.worst_fixed_point.max(fp);
            a.atoms += 1;
            if is_mark {
                a.mark_atoms += 1;
            }
        }
    }
    a.passed = a.worst_identity <= JUMP_IDENTITY_TOL && a.worst_fixed_point <= FIXED_POINT_TOL;
    a
}

/// Representative paths: all down, middle, all up on the tree; the first
/// few bundle paths otherwise.
pub fn sample_paths(ens: &BrownianEnsemble, count: usize) -> Vec<Vec<usize>> {
    let n = ens.grid().len();
    match ens.topology() {
        Topology::Tree => vec![
            vec![0; n],
            (0..n).map(|i| i / 2).collect(),
            (0..n).collect(),
        ],
        Topology::Paths(m) => (0..count.min(m)).map(|p| vec![p; n]).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathTransformCheck {
    pub path: usize,
    pub m0: f64,
    pub bounds: BoundReport,
    pub round_trip_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformCheck {
    pub samples: usize,
    pub paths: Vec<PathTransformCheck>,
    pub passed: bool,
}

fn round_trip_error(a: &Solution, b: &Solution) -> f64 {
    let mut e: f64 = 0.0;
    for (fa, fb) in [
        (&a.y, &b.y),
        (&a.y_left, &b.y_left),
        (&a.z, &b.z),
        (&a.kp_cont, &b.kp_cont),
        (&a.km_cont, &b.km_cont),
    ] {
        for (ra, rb) in fa.iter().zip(fb) {
            for (x, y) in ra.iter().zip(rb) {
                e = e.max((x - y).abs());
            }
        }
    }
    e
}

/// Bound verification and solution round trip along sample paths.
pub fn transform_check(
    c: &CoefficientSet,
    ens: &BrownianEnsemble,
    sol: &Solution,
    samples: usize,
    seed: u64,
) -> Result<TransformCheck, CliError> {
    let mut paths = Vec::new();
    for (j, states) in sample_paths(ens, 3).into_iter().enumerate() {
        let b: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| ens.b(i, k))
            .collect();
        let path = c.along_path(&b)?;
        let m = build_m(&path)?;
        let ts = forward_transform(&path, &m)?;
        let bounds = verify_bounds(&ts, samples, seed.wrapping_add(j as u64));
        let single = sol.restrict(&states)?;
        let back = inverse_transform(&forward_solution(&single, &path, &m)?, &path, &m)?;
        paths.push(PathTransformCheck {
            path: j,
            m0: m.m_at(0),
            bounds,
            round_trip_error: round_trip_error(&single, &back),
        });
    }
    let passed = paths
        .iter()
        .all(|p| p.bounds.passed() && p.round_trip_error <= ROUND_TRIP_TOL);
    Ok(TransformCheck {
        samples,
        paths,
        passed,
    })
}
