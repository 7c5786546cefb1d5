//! Executable comparison: hypothesis margins on a pair of coefficient sets,
//! and the ordering of the solved `Y` and reflecting measures.
//!
//! Orientation is always "set 1 is the smaller one": the conclusion checked
//! is `Y¹ ≤ Y²`. For the maximal-solution bundle, set 2 is the equation
//! whose maximal solution is approximated by the ladder.

use serde::Serialize;

use crate::brownian::Topology;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::TIME_EPS;
use crate::reflection::{jump_reflect, JUMP_TOL};
use crate::solution::Solution;
use crate::solver::{
    solve_concatenated, solve_general, solve_zero_generator, Backend, BackendSpec, SolveReport,
    Stepping,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisBundle {
    /// Two solutions, with the full set of ordering hypotheses.
    Appendix,
    /// A solution of set 1 against the maximal solution of set 2.
    Maximal,
}

#[derive(Clone)]
pub struct ComparisonCase {
    pub c1: CoefficientSet,
    pub c2: CoefficientSet,
    pub bundle: HypothesisBundle,
}

impl ComparisonCase {
    pub fn new(c1: CoefficientSet, c2: CoefficientSet, bundle: HypothesisBundle) -> Result<Self> {
        let (a, b) = (c1.grid().nodes(), c2.grid().nodes());
        if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > TIME_EPS) {
            return Err(Error::GridMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(Self { c1, c2, bundle })
    }
}

/// Worst margin of one hypothesis; nonnegative means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRecord {
    pub id: &'static str,
    pub worst_margin: f64,
    pub node: usize,
    pub state: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub bundle: HypothesisBundle,
    pub tolerance: f64,
    pub records: Vec<HypothesisRecord>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn get(&self, id: &str) -> Option<&HypothesisRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.records
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.id)
            .collect()
    }
}

/// Margin for hypotheses compared against equality (fixed-point residuals).
pub const HYPOTHESIS_TOL: f64 = 1e-10;
/// Barrier values closer than this count as equal for the measure check.
pub const BARRIER_EQ_TOL: f64 = 1e-12;
/// Grid points per axis in the sampled monotonicity check of `y + h²`.
const MONO_POINTS: usize = 17;

struct Acc {
    id: &'static str,
    worst: f64,
    node: usize,
    state: usize,
}

impl Acc {
    fn new(id: &'static str) -> Self {
        Self {
            id,
            worst: f64::INFINITY,
            node: 0,
            state: 0,
        }
    }

    fn push(&mut self, margin: f64, node: usize, state: usize) {
        let m = if margin.is_nan() {
            f64::NEG_INFINITY
        } else {
            margin
        };
        if m < self.worst {
            self.worst = m;
            self.node = node;
            self.state = state;
        }
    }

    fn finish(self, tol: f64) -> HypothesisRecord {
        let worst = if self.worst == f64::INFINITY {
            0.0
        } else {
            self.worst
        };
        HypothesisRecord {
            id: self.id,
            worst_margin: worst,
            node: self.node,
            state: self.state,
            passed: worst >= -tol,
        }
    }
}

fn declared(c: &CoefficientSet, present: bool) -> f64 {
    if !present || c.lipschitz().is_some() {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

fn sample_axis(lo: f64, up: f64) -> Vec<f64> {
    let (a, b) = if lo.is_finite() && up.is_finite() {
        (lo - 0.5, up + 0.5)
    } else {
        (-2.0, 2.0)
    };
    (0..MONO_POINTS)
        .map(|j| a + (b - a) * j as f64 / (MONO_POINTS - 1) as f64)
        .collect()
}

fn b_at(sol: &Solution, grid_t: &[f64], i: usize, k: usize) -> f64 {
    match sol.topology {
        Topology::Tree => (2.0 * k as f64 - i as f64) * (grid_t[1] - grid_t[0]).sqrt(),
        Topology::Paths(_) => f64::NAN,
    }
}

/// Per-hypothesis worst margins along the solved pair. Report only.
///
/// `b` gives the Brownian value at `(node, state)`; it must be the
/// ensemble both solutions were computed on.
pub fn validate_hypotheses_with(
    case: &ComparisonCase,
    sol1: &Solution,
    sol2: &Solution,
    b: &dyn Fn(usize, usize) -> f64,
) -> Result<HypothesisReport> {
    sol1.check_shape(sol2)?;
    let (c1, c2) = (&case.c1, &case.c2);
    let n = sol1.nodes();
    let last = n - 1;
    let tol = HYPOTHESIS_TOL;
    let ctx = |c: &CoefficientSet, i: usize, k: usize| c.ctx(i, b(i, k));
    let mut records = Vec::new();

    // Terminal values, kept separate from the barriers on [0, T).
    let mut term = Acc::new("terminal");
    for k in 0..sol1.states(last) {
        term.push(
            c2.terminal(&ctx(c2, last, k)) - c1.terminal(&ctx(c1, last, k)),
            last,
            k,
        );
    }

    let (mut lower, mut upper, mut width) = (
        Acc::new("lower_barrier"),
        Acc::new("upper_barrier"),
        Acc::new("barrier_width"),
    );
    let mut gen = Acc::new("driver");
    let mut react = Acc::new("reaction");
    let mut jump = Acc::new("jump");
    let (a1, a2) = (c1.a(), c2.a());
    for i in 0..n {
        for k in 0..sol1.states(i) {
            let x1 = ctx(c1, i, k);
            let x2 = ctx(c2, i, k);
            let (y1, y2) = (sol1.y[i][k], sol2.y[i][k]);
            if i < last {
                lower.push(y2 - c1.lower_right(&x1), i, k);
                upper.push(c2.upper_right(&x2) - y1, i, k);
                let w = c1.upper_right(&x1).min(c2.upper_right(&x2))
                    - c1.lower_right(&x1).max(c2.lower_right(&x2));
                width.push(2.0 - w, i, k);
                let z1 = sol1.z[i][k];
                gen.push(c2.f(&x2, y1, z1) - c1.f(&x1, y1, z1), i, k);
                let da1 = a1.continuous_increments()[i];
                let da2 = a2.continuous_increments()[i];
                react.push(c2.g(&x2, y1) * da2 - c1.g(&x1, y1) * da1, i, k);
            }
            if i > 0 {
                let ja1 = a1.jump_increments()[i];
                let ja2 = a2.jump_increments()[i];
                if ja1 != 0.0 || ja2 != 0.0 {
                    react.push(c2.g(&x2, y1) * ja2 - c1.g(&x1, y1) * ja1, i, k);
                }
                let yl = sol1.y_left[i][k];
                let h1 = if c1.grid().is_mark(i) {
                    c1.h(&x1, yl, y1)
                } else {
                    0.0
                };
                let h2 = if c2.grid().is_mark(i) {
                    c2.h(&x2, yl, y1)
                } else {
                    0.0
                };
                jump.push(h2 - h1, i, k);
            }
        }
    }
    records.push(term.finish(tol));
    records.push(lower.finish(tol));
    records.push(upper.finish(tol));
    if case.bundle == HypothesisBundle::Appendix {
        records.push(width.finish(tol));
        let mut a_total = Acc::new("a_total");
        let at = a2.terminal();
        a_total.push(at.min(1.0 - at), last, 0);
        records.push(a_total.finish(tol));
        let mut dr = Acc::new("r_increments");
        let (r1, r2) = (c1.r(), c2.r());
        for i in 0..last {
            dr.push(
                r2.continuous_increments()[i] - r1.continuous_increments()[i],
                i,
                0,
            );
        }
        for i in 1..n {
            dr.push(r2.jump_increments()[i] - r1.jump_increments()[i], i, 0);
        }
        records.push(dr.finish(tol));
    }
    records.push(gen.finish(tol));
    if case.bundle == HypothesisBundle::Appendix {
        let mut b3 = Acc::new("driver_declared");
        b3.push(declared(c2, c2.driver().is_some()), 0, 0);
        records.push(b3.finish(tol));
    }
    records.push(react.finish(tol));
    if case.bundle == HypothesisBundle::Appendix {
        let mut b4 = Acc::new("reaction_declared");
        b4.push(declared(c2, c2.reaction().is_some()), 0, 0);
        records.push(b4.finish(tol));
    }
    records.push(jump.finish(tol));

    if case.bundle == HypothesisBundle::Appendix {
        let mut mono = Acc::new("jump_monotone");
        let mut fixed = Acc::new("jump_fixed_point");
        for &m in c2.grid().marks() {
            for k in 0..sol2.states(m) {
                let x2 = ctx(c2, m, k);
                let (ll, ul) = (c2.lower_left(&x2), c2.upper_left(&x2));
                let (lr, ur) = (c2.lower_right(&x2), c2.upper_right(&x2));
                let ys = sample_axis(lr, ur);
                for x in sample_axis(ll, ul) {
                    let xc = x.max(ll).min(ul);
                    let phi = |y: f64| y + c2.h(&x2, xc, y.max(lr).min(ur));
                    for w in ys.windows(2) {
                        mono.push(phi(w[1]) - phi(w[0]), m, k);
                    }
                }
                let y = sol2.y[m][k];
                let h = |x: f64| c2.h(&x2, x, y);
                let forcing = sol2.jumps.forcing[m][k];
                let oracle = jump_reflect(y, &h, forcing, ll, ul, JUMP_TOL)?;
                fixed.push(-(oracle.y_left - sol2.y_left[m][k]).abs(), m, k);
            }
        }
        records.push(mono.finish(tol));
        records.push(fixed.finish(tol));
    }
    Ok(HypothesisReport {
        bundle: case.bundle,
        tolerance: tol,
        records,
    })
}

/// [`validate_hypotheses_with`] for tree solutions, where the Brownian value
/// is determined by node and state.
pub fn validate_hypotheses(
    case: &ComparisonCase,
    sol1: &Solution,
    sol2: &Solution,
) -> Result<HypothesisReport> {
    if !matches!(sol1.topology, Topology::Tree) {
        return Err(Error::Unsupported(
            "pass the ensemble's Brownian values for Monte Carlo solutions".into(),
        ));
    }
    let times = sol1.times.clone();
    validate_hypotheses_with(case, sol1, sol2, &|i, k| b_at(sol1, &times, i, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderWitness {
    pub node: usize,
    pub state: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub hypotheses: HypothesisReport,
    pub tolerance: f64,
    /// Node-state pairs examined for `Y¹ ≤ Y² + tol` (right and left values).
    pub pairs: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub worst: OrderWitness,
    /// Atoms at barrier-coincidence nodes, and how many broke the ordering.
    pub measure_checks: usize,
    pub measure_violations: usize,
    pub worst_measure: OrderWitness,
}

impl ComparisonReport {
    /// Strict pass: no violation of either conclusion.
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.measure_violations == 0
    }
}

/// Checks both conclusions on solved pairs.
pub fn compare_solutions(
    hypotheses: HypothesisReport,
    sol1: &Solution,
    sol2: &Solution,
    tol: f64,
) -> Result<ComparisonReport> {
    sol1.check_shape(sol2)?;
    let mut pairs = 0;
    let mut violations = 0;
    let mut worst = OrderWitness {
        node: 0,
        state: 0,
        excess: f64::NEG_INFINITY,
    };
    for (f1, f2) in [(&sol1.y, &sol2.y), (&sol1.y_left, &sol2.y_left)] {
        for (i, (r1, r2)) in f1.iter().zip(f2).enumerate() {
            for (k, (a, b)) in r1.iter().zip(r2).enumerate() {
                pairs += 1;
                let e = a - b;
                if e > tol {
                    violations += 1;
                }
                if e > worst.excess {
                    worst = OrderWitness {
                        node: i,
                        state: k,
                        excess: e,
                    };
                }
            }
        }
    }

    let mut measure_checks = 0;
    let mut measure_violations = 0;
    let mut worst_measure = OrderWitness {
        node: 0,
        state: 0,
        excess: f64::NEG_INFINITY,
    };
    let mut check = |small: f64, large: f64, i: usize, k: usize| {
        measure_checks += 1;
        let e = small - large;
        if e > tol {
            measure_violations += 1;
        }
        if e > worst_measure.excess {
            worst_measure = OrderWitness {
                node: i,
                state: k,
                excess: e,
            };
        }
    };
    let eq = |a: f64, b: f64| a == b || (a - b).abs() <= BARRIER_EQ_TOL;
    for i in 0..sol1.nodes() {
        for k in 0..sol1.states(i) {
            if i + 1 < sol1.nodes() {
                if eq(sol1.upper[i][k], sol2.upper[i][k]) {
                    check(sol1.km_cont[i][k], sol2.km_cont[i][k], i, k);
                }
                if eq(sol1.lower[i][k], sol2.lower[i][k]) {
                    check(sol2.kp_cont[i][k], sol1.kp_cont[i][k], i, k);
                }
            }
            if i > 0 {
                if eq(sol1.upper_left[i][k], sol2.upper_left[i][k]) {
                    check(sol1.km_jump[i][k], sol2.km_jump[i][k], i, k);
                }
                if eq(sol1.lower_left[i][k], sol2.lower_left[i][k]) {
                    check(sol2.kp_jump[i][k], sol1.kp_jump[i][k], i, k);
                }
            }
        }
    }
    Ok(ComparisonReport {
        hypotheses,
        tolerance: tol,
        pairs,
        violations,
        violation_fraction: violations as f64 / pairs.max(1) as f64,
        worst,
        measure_checks,
        measure_violations,
        worst_measure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonOptions {
    pub stepping: Stepping,
    pub ladder_levels: usize,
    pub ladder_tol: f64,
    pub tol: f64,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            stepping: Stepping::Explicit,
            ladder_levels: 6,
            ladder_tol: 1e-10,
            tol: 1e-8,
        }
    }
}

/// Zero regime without generators, concatenation when a Lipschitz constant
/// is declared, the ladder otherwise.
pub fn solve_auto(
    c: &CoefficientSet,
    backend: &Backend,
    opts: &ComparisonOptions,
) -> Result<SolveReport> {
    if c.is_zero_generator() {
        solve_zero_generator(c, backend)
    } else if c.lipschitz().is_some() || !c.has_generators() {
        solve_concatenated(c, backend, opts.stepping)
    } else {
        solve_general(
            c,
            backend,
            opts.ladder_levels,
            opts.ladder_tol,
            opts.stepping,
        )
    }
}

/// Solves both sets on one backend, validates the hypotheses along the
/// solutions and checks the conclusions.
pub fn check_comparison(
    case: &ComparisonCase,
    backend: &Backend,
    opts: &ComparisonOptions,
) -> Result<(ComparisonReport, SolveReport, SolveReport)> {
    let r1 = solve_auto(&case.c1, backend, opts)?;
    let r2 = match case.bundle {
        HypothesisBundle::Appendix => solve_auto(&case.c2, backend, opts)?,
        HypothesisBundle::Maximal => solve_general(
            &case.c2,
            backend,
            opts.ladder_levels,
            opts.ladder_tol,
            opts.stepping,
        )?,
    };
    let ens = backend.ensemble();
    let hyp = match backend.spec() {
        BackendSpec::Tree => validate_hypotheses(case, &r1.solution, &r2.solution)?,
        BackendSpec::Lsmc { .. } => {
            validate_hypotheses_with(case, &r1.solution, &r2.solution, &|i, k| ens.b(i, k))?
        }
    };
    let rep = compare_solutions(hyp, &r1.solution, &r2.solution, opts.tol)?;
    Ok((rep, r1, r2))
}
