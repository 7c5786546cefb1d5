//! One backward sweep: time stepping, projection and jump reflection.

use serde::{Deserialize, Serialize};

use super::backend::Backend;
use crate::brownian::Topology;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::reflection::{jump_reflect, skorokhod_project, JUMP_TOL};
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stepping {
    /// `f`, `g` evaluated at `Y_{i+1}`.
    #[default]
    Explicit,
    /// A fixed number of fixed-point sweeps in `Y_i`.
    Implicit { sweeps: usize },
    /// Fixed-point iteration in `Y_i` until the relative update is below `tol`.
    Converged { tol: f64, max_iter: usize },
}

impl Stepping {
    pub const IMPLICIT_SWEEPS: usize = 3;

    pub fn implicit() -> Self {
        Stepping::Implicit {
            sweeps: Self::IMPLICIT_SWEEPS,
        }
    }

    pub fn converged() -> Self {
        Stepping::Converged {
            tol: 1e-15,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolveCounters {
    pub sweeps: usize,
    pub steps: usize,
    pub conditional_expectations: usize,
    pub implicit_iterations: usize,
    pub projections: usize,
    pub jump_reflections: usize,
}

impl SolveCounters {
    pub(crate) fn absorb(&mut self, o: &SolveCounters) {
        self.sweeps += o.sweeps;
        self.steps += o.steps;
        self.conditional_expectations += o.conditional_expectations;
        self.implicit_iterations += o.implicit_iterations;
        self.projections += o.projections;
        self.jump_reflections += o.jump_reflections;
    }
}

/// Result of [`step_backward`] at every state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub y_tilde: Vec<f64>,
    pub z: Vec<f64>,
    /// Fixed-point iterations summed over states (0 for explicit stepping).
    pub iterations: usize,
}

/// `(Ỹ_i, Z_i)` from the values `Y_{i+1}` (left limits at node `i + 1`).
///
/// For implicit stepping the generator is iterated in `Y_i` with the
/// barrier projection applied between sweeps, and `Ỹ` is returned at the
/// last iterate, so that projecting it gives the accepted `Y_i`.
pub fn step_backward(
    c: &CoefficientSet,
    backend: &Backend,
    step: usize,
    next: &[f64],
    stepping: Stepping,
) -> Result<StepOutput> {
    step_impl(c, backend, step, next, stepping, None)
}

fn step_impl(
    c: &CoefficientSet,
    backend: &Backend,
    step: usize,
    next: &[f64],
    stepping: Stepping,
    frozen: Option<&Solution>,
) -> Result<StepOutput> {
    let ens = backend.ensemble();
    let grid = ens.grid();
    let dt = grid.dt(step);
    let da = c.a().continuous_increments()[step];
    let dr = c.r().continuous_increments()[step];
    let states = backend.states(step);
    if next.len() != backend.states(step + 1) {
        return Err(Error::GridMismatch {
            expected: backend.states(step + 1),
            got: next.len(),
        });
    }
    let z = backend.expect_z(step, next);
    let ctxs: Vec<_> = (0..states).map(|k| c.ctx(step, ens.b(step, k))).collect();
    let generators = c.has_generators();

    if !generators {
        let e = backend.expect(step, next);
        return Ok(StepOutput {
            y_tilde: e.into_iter().map(|v| v + dr).collect(),
            z,
            iterations: 0,
        });
    }

    match stepping {
        Stepping::Explicit => {
            let e = match frozen {
                Some(prev) => {
                    let yn = &prev.y_left[step + 1];
                    let zn = &prev.z[step];
                    backend.expect_pairs(step, |k, ch| {
                        let ctx = &ctxs[k];
                        next[ch] + c.f(ctx, yn[ch], zn[k]) * dt + c.g(ctx, yn[ch]) * da
                    })
                }
                None => backend.expect_pairs(step, |k, ch| {
                    let ctx = &ctxs[k];
                    next[ch] + c.f(ctx, next[ch], z[k]) * dt + c.g(ctx, next[ch]) * da
                }),
            };
            Ok(StepOutput {
                y_tilde: e.into_iter().map(|v| v + dr).collect(),
                z,
                iterations: 0,
            })
        }
        Stepping::Implicit { .. } | Stepping::Converged { .. } => {
            let e = backend.expect(step, next);
            let mut y_tilde = Vec::with_capacity(states);
            let mut iterations = 0;
            for k in 0..states {
                let ctx = &ctxs[k];
                let base = e[k] + dr;
                if let Some(prev) = frozen {
                    let (yn, zn) = (prev.y[step][k], prev.z[step][k]);
                    y_tilde.push(base + c.f(ctx, yn, zn) * dt + c.g(ctx, yn) * da);
                    continue;
                }
                let lo = c.lower_right(ctx);
                let up = c.upper_right(ctx);
                let drift = |y: f64| c.f(ctx, y, z[k]) * dt + c.g(ctx, y) * da;
                let mut y = skorokhod_project(base, lo, up)?.value;
                let mut yt = base + drift(y);
                match stepping {
                    Stepping::Implicit { sweeps } => {
                        for _ in 1..sweeps.max(1) {
                            y = skorokhod_project(yt, lo, up)?.value;
                            yt = base + drift(y);
                            iterations += 1;
                        }
                    }
                    Stepping::Converged { tol, max_iter } => {
                        let mut done = false;
                        for _ in 0..max_iter {
                            let y_new = skorokhod_project(yt, lo, up)?.value;
                            iterations += 1;
                            if (y_new - y).abs() <= tol * (1.0 + y.abs()) {
                                done = true;
                                break;
                            }
                            y = y_new;
                            yt = base + drift(y);
                        }
                        if !done {
                            let y_new = skorokhod_project(yt, lo, up)?.value;
                            return Err(Error::NonConvergence {
                                iterations: max_iter,
                                gap: (y_new - y).abs(),
                            });
                        }
                    }
                    Stepping::Explicit => unreachable!(),
                }
                y_tilde.push(yt);
            }
            Ok(StepOutput {
                y_tilde,
                z,
                iterations,
            })
        }
    }
}

pub(crate) struct Sweep<'a, 'b> {
    pub c: &'a CoefficientSet,
    pub backend: &'a Backend<'b>,
    pub stepping: Stepping,
    pub frozen: Option<&'a Solution>,
    pub counters: SolveCounters,
}

impl<'a, 'b> Sweep<'a, 'b> {
    pub fn new(c: &'a CoefficientSet, backend: &'a Backend<'b>, stepping: Stepping) -> Self {
        Self {
            c,
            backend,
            stepping,
            frozen: None,
            counters: SolveCounters::default(),
        }
    }

    /// Empty solution with barrier values filled and `Y_T = ξ`.
    pub fn init(&self) -> Solution {
        let ens = self.backend.ensemble();
        let grid = ens.grid();
        let mut sol = Solution::empty(ens.topology(), grid.nodes().to_vec());
        sol.marks = self.c.grid().sorted_marks();
        let last = grid.len() - 1;
        for i in 0..grid.len() {
            for k in 0..ens.states(i) {
                let ctx = self.c.ctx(i, ens.b(i, k));
                sol.lower[i][k] = self.c.lower_right(&ctx);
                sol.upper[i][k] = self.c.upper_right(&ctx);
                sol.lower_left[i][k] = self.c.lower_left(&ctx);
                sol.upper_left[i][k] = self.c.upper_left(&ctx);
            }
        }
        for k in 0..ens.states(last) {
            let ctx = self.c.ctx(last, ens.b(last, k));
            sol.y[last][k] = self.c.terminal(&ctx);
        }
        sol
    }

    /// Left limits at node `i ≥ 1` from the right values there.
    pub fn jump(&mut self, sol: &mut Solution, i: usize) -> Result<()> {
        let ens = self.backend.ensemble();
        let mark = self.c.grid().is_mark(i);
        let dr = self.c.r().jump_increments()[i];
        let da = self.c.a().jump_increments()[i];
        for k in 0..sol.states(i) {
            let ctx = self.c.ctx(i, ens.b(i, k));
            let y = sol.y[i][k];
            let forcing = dr
                + if da != 0.0 {
                    self.c.g(&ctx, y) * da
                } else {
                    0.0
                };
            let (lo, up) = (sol.lower_left[i][k], sol.upper_left[i][k]);
            let (yl, kp, km, pre) = if mark {
                let h = |x: f64| self.c.h(&ctx, x, y);
                let jr = jump_reflect(y, &h, forcing, lo, up, JUMP_TOL)?;
                self.counters.jump_reflections += 1;
                (jr.y_left, jr.dk_plus, jr.dk_minus, jr.pre)
            } else {
                let p = skorokhod_project(y + forcing, lo, up)?;
                self.counters.projections += 1;
                (p.value, p.dk_plus, p.dk_minus, y + forcing)
            };
            sol.y_left[i][k] = yl;
            sol.kp_jump[i][k] = kp;
            sol.km_jump[i][k] = km;
            sol.jumps.forcing[i][k] = forcing;
            sol.jumps.pre[i][k] = pre;
        }
        Ok(())
    }

    /// Continuous step over interval `i`, using the left limits at `i + 1`.
    pub fn step(&mut self, sol: &mut Solution, i: usize) -> Result<()> {
        let out = step_impl(
            self.c,
            self.backend,
            i,
            &sol.y_left[i + 1],
            self.stepping,
            self.frozen,
        )?;
        self.counters.steps += 1;
        self.counters.conditional_expectations += 2;
        self.counters.implicit_iterations += out.iterations;
        for k in 0..sol.states(i) {
            let p = skorokhod_project(out.y_tilde[k], sol.lower[i][k], sol.upper[i][k])?;
            self.counters.projections += 1;
            sol.y[i][k] = p.value;
            sol.kp_cont[i][k] = p.dk_plus;
            sol.km_cont[i][k] = p.dk_minus;
            sol.z[i][k] = out.z[k];
        }
        if i == 0 {
            sol.y_left[0] = sol.y[0].clone();
        }
        Ok(())
    }

    /// Nodes `start..=end`, given right values at `end`. The jump at `end`
    /// belongs to this segment, the jump at `start` to the previous one.
    pub fn segment(&mut self, sol: &mut Solution, start: usize, end: usize) -> Result<()> {
        if end > 0 {
            self.jump(sol, end)?;
        }
        for i in (start..end).rev() {
            self.step(sol, i)?;
            if i > start {
                self.jump(sol, i)?;
            }
        }
        Ok(())
    }

    pub fn full(&mut self) -> Result<Solution> {
        let mut sol = self.init();
        let last = sol.nodes() - 1;
        self.segment(&mut sol, 0, last)?;
        self.counters.sweeps += 1;
        Ok(sol)
    }
}

/// Node count and topology agreement between coefficients and backend.
pub(crate) fn check_compatible(c: &CoefficientSet, backend: &Backend) -> Result<()> {
    let ens = backend.ensemble();
    let (a, b) = (c.grid().nodes(), ens.grid().nodes());
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.iter()
        .zip(b)
        .any(|(x, y)| (x - y).abs() > crate::grid::TIME_EPS)
    {
        return Err(Error::InvalidInput(
            "coefficient grid and ensemble grid differ".into(),
        ));
    }
    if matches!(ens.topology(), Topology::Paths(0)) {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    c.validate(ens)
}
