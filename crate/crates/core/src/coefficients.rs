//! The equation's data: terminal value, generators, forcing, barriers and
//! the user-supplied bound witnesses.
//!
//! Random inputs are Markov in the Brownian state: every closure receives a
//! [`NodeCtx`] with the node index, its time and the current value of `B`.

use std::fmt;
use std::sync::Arc;

use crate::brownian::BrownianEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::FiniteVariationPath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCtx {
    pub step: usize,
    pub t: f64,
    pub b: f64,
}

pub type StateFn = Arc<dyn Fn(&NodeCtx) -> f64 + Send + Sync>;
/// `f(t, y, z)`.
pub type DriverFn = Arc<dyn Fn(&NodeCtx, f64, &[f64]) -> f64 + Send + Sync>;
/// `g(t, y)`.
pub type ReactionFn = Arc<dyn Fn(&NodeCtx, f64) -> f64 + Send + Sync>;
/// `h(t, x, y)` with `x` the left value and `y` the right value.
pub type JumpFn = Arc<dyn Fn(&NodeCtx, f64, f64) -> f64 + Send + Sync>;

pub fn constant_fn(v: f64) -> StateFn {
    Arc::new(move |_| v)
}

/// An rcll barrier. Without a left closure the barrier is continuous in
/// time, so its left limit is the right value of the same node.
#[derive(Clone)]
pub struct Barrier {
    right: StateFn,
    left: Option<StateFn>,
}

impl Barrier {
    pub fn constant(v: f64) -> Self {
        Self {
            right: constant_fn(v),
            left: None,
        }
    }

    pub fn from_fn(f: impl Fn(&NodeCtx) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            right: Arc::new(f),
            left: None,
        }
    }

    pub fn with_left(
        right: impl Fn(&NodeCtx) -> f64 + Send + Sync + 'static,
        left: impl Fn(&NodeCtx) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            right: Arc::new(right),
            left: Some(Arc::new(left)),
        }
    }

    pub fn right(&self, ctx: &NodeCtx) -> f64 {
        (self.right)(ctx)
    }

    pub fn left(&self, ctx: &NodeCtx) -> f64 {
        match (&self.left, ctx.step) {
            (_, 0) | (None, _) => (self.right)(ctx),
            (Some(l), _) => l(ctx),
        }
    }
}

/// Nonnegative bound processes: `|f| ≤ η + C|z|²`, `|g| ≤ β`, `|h| ≤ l`.
#[derive(Clone)]
pub struct Witnesses {
    pub eta: StateFn,
    pub c: StateFn,
    pub beta: StateFn,
    /// Jump bound, a mass at the node.
    pub l: StateFn,
}

impl Default for Witnesses {
    fn default() -> Self {
        Self {
            eta: constant_fn(0.0),
            c: constant_fn(0.0),
            beta: constant_fn(0.0),
            l: constant_fn(0.0),
        }
    }
}

/// `S = S₀ + V + ∫γ dB`, a process lying between the barriers.
#[derive(Clone)]
pub struct SemimartingaleWitness {
    pub s0: f64,
    pub v: FiniteVariationPath,
    pub gamma: StateFn,
}

#[derive(Clone)]
pub struct CoefficientSet {
    grid: TimeGrid,
    terminal: StateFn,
    f: Option<DriverFn>,
    f_uses_z: bool,
    g: Option<ReactionFn>,
    h: Option<JumpFn>,
    a: FiniteVariationPath,
    r: FiniteVariationPath,
    lower: Barrier,
    upper: Barrier,
    pub witnesses: Witnesses,
    pub semimartingale: Option<SemimartingaleWitness>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("nodes", &self.grid.len())
            .field("marks", &self.grid.marks())
            .field("has_f", &self.f.is_some())
            .field("has_g", &self.g.is_some())
            .field("has_h", &self.h.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl CoefficientSet {
    /// Zero data with unbounded barriers.
    pub fn new(grid: &TimeGrid) -> Self {
        Self {
            grid: grid.clone(),
            terminal: constant_fn(0.0),
            f: None,
            f_uses_z: false,
            g: None,
            h: None,
            a: FiniteVariationPath::zero(grid.len()),
            r: FiniteVariationPath::zero(grid.len()),
            lower: Barrier::constant(f64::NEG_INFINITY),
            upper: Barrier::constant(f64::INFINITY),
            witnesses: Witnesses::default(),
            semimartingale: None,
            lipschitz: None,
        }
    }

    pub fn with_terminal(mut self, xi: impl Fn(&NodeCtx) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(xi);
        self
    }

    /// Generator `f`; `uses_z = false` lets the approximations skip the z search.
    pub fn with_driver(
        mut self,
        f: impl Fn(&NodeCtx, f64, &[f64]) -> f64 + Send + Sync + 'static,
        uses_z: bool,
    ) -> Self {
        self.f = Some(Arc::new(f));
        self.f_uses_z = uses_z;
        self
    }

    pub fn with_driver_arc(mut self, f: Option<DriverFn>, uses_z: bool) -> Self {
        self.f = f;
        self.f_uses_z = uses_z;
        self
    }

    pub fn with_reaction(
        mut self,
        g: impl Fn(&NodeCtx, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn with_reaction_arc(mut self, g: Option<ReactionFn>) -> Self {
        self.g = g;
        self
    }

    pub fn with_jump(
        mut self,
        h: impl Fn(&NodeCtx, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.h = Some(Arc::new(h));
        self
    }

    pub fn with_jump_arc(mut self, h: Option<JumpFn>) -> Self {
        self.h = h;
        self
    }

    pub fn with_a(mut self, a: FiniteVariationPath) -> Result<Self> {
        self.check_nodes(a.nodes())?;
        if !a.is_nondecreasing() {
            return Err(Error::InvalidInput("A must be nondecreasing".into()));
        }
        self.a = a;
        Ok(self)
    }

    pub fn with_r(mut self, r: FiniteVariationPath) -> Result<Self> {
        self.check_nodes(r.nodes())?;
        self.r = r;
        Ok(self)
    }

    pub fn with_barriers(mut self, lower: Barrier, upper: Barrier) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_witnesses(mut self, w: Witnesses) -> Self {
        self.witnesses = w;
        self
    }

    pub fn with_semimartingale(mut self, s: SemimartingaleWitness) -> Result<Self> {
        self.check_nodes(s.v.nodes())?;
        self.semimartingale = Some(s);
        Ok(self)
    }

    /// Declared Lipschitz constant shared by `f` (in `y` and `z`) and `g`.
    pub fn with_lipschitz(mut self, a: Option<f64>) -> Self {
        self.lipschitz = a;
        self
    }

    /// Same data on a grid with the same nodes but another mark list.
    pub fn with_grid(mut self, grid: TimeGrid) -> Result<Self> {
        if grid.nodes() != self.grid.nodes() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                got: grid.len(),
            });
        }
        self.grid = grid;
        Ok(self)
    }

    fn check_nodes(&self, n: usize) -> Result<()> {
        if n != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                got: n,
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn ctx(&self, step: usize, b: f64) -> NodeCtx {
        NodeCtx {
            step,
            t: self.grid.t(step),
            b,
        }
    }

    fn last(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn terminal(&self, ctx: &NodeCtx) -> f64 {
        (self.terminal)(ctx)
    }

    /// `L_t`; at `T` this is `ξ` by the terminal convention.
    pub fn lower_right(&self, ctx: &NodeCtx) -> f64 {
        if ctx.step == self.last() {
            self.terminal(ctx)
        } else {
            self.lower.right(ctx)
        }
    }

    pub fn lower_left(&self, ctx: &NodeCtx) -> f64 {
        if ctx.step == 0 {
            self.lower_right(ctx)
        } else {
            self.lower.left(ctx)
        }
    }

    /// `U_t`; at `T` this is `ξ`.
    pub fn upper_right(&self, ctx: &NodeCtx) -> f64 {
        if ctx.step == self.last() {
            self.terminal(ctx)
        } else {
            self.upper.right(ctx)
        }
    }

    pub fn upper_left(&self, ctx: &NodeCtx) -> f64 {
        if ctx.step == 0 {
            self.upper_right(ctx)
        } else {
            self.upper.left(ctx)
        }
    }

    /// The user's barriers without the terminal substitution.
    pub fn raw_barriers(&self) -> (&Barrier, &Barrier) {
        (&self.lower, &self.upper)
    }

    pub fn f(&self, ctx: &NodeCtx, y: f64, z: f64) -> f64 {
        match &self.f {
            Some(f) => f(ctx, y, &[z]),
            None => 0.0,
        }
    }

    pub fn g(&self, ctx: &NodeCtx, y: f64) -> f64 {
        match &self.g {
            Some(g) => g(ctx, y),
            None => 0.0,
        }
    }

    pub fn h(&self, ctx: &NodeCtx, x: f64, y: f64) -> f64 {
        match &self.h {
            Some(h) => h(ctx, x, y),
            None => 0.0,
        }
    }

    pub fn driver(&self) -> Option<&DriverFn> {
        self.f.as_ref()
    }

    pub fn reaction(&self) -> Option<&ReactionFn> {
        self.g.as_ref()
    }

    pub fn jump(&self) -> Option<&JumpFn> {
        self.h.as_ref()
    }

    pub fn driver_uses_z(&self) -> bool {
        self.f.is_some() && self.f_uses_z
    }

    pub fn has_generators(&self) -> bool {
        self.f.is_some() || self.g.is_some()
    }

    pub fn is_zero_generator(&self) -> bool {
        self.f.is_none() && self.g.is_none() && self.h.is_none()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn a(&self) -> &FiniteVariationPath {
        &self.a
    }

    pub fn r(&self) -> &FiniteVariationPath {
        &self.r
    }

    pub fn eta(&self, ctx: &NodeCtx) -> f64 {
        (self.witnesses.eta)(ctx)
    }

    pub fn quad(&self, ctx: &NodeCtx) -> f64 {
        (self.witnesses.c)(ctx)
    }

    pub fn beta(&self, ctx: &NodeCtx) -> f64 {
        (self.witnesses.beta)(ctx)
    }

    pub fn l(&self, ctx: &NodeCtx) -> f64 {
        (self.witnesses.l)(ctx)
    }

    /// Checks `L ≤ U` (right and left values) at every state of every node.
    pub fn validate(&self, ensemble: &BrownianEnsemble) -> Result<()> {
        self.check_nodes(ensemble.grid().len())?;
        for i in 0..self.grid.len() {
            for k in 0..ensemble.states(i) {
                let ctx = self.ctx(i, ensemble.b(i, k));
                let pairs = [
                    (self.lower_right(&ctx), self.upper_right(&ctx)),
                    (self.lower_left(&ctx), self.upper_left(&ctx)),
                ];
                for (lo, up) in pairs {
                    if lo.is_nan() || up.is_nan() || lo > up {
                        return Err(Error::BarrierOrder {
                            node: i,
                            t: ctx.t,
                            state: k,
                            lower: lo,
                            upper: up,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the reduced-problem box `-1 ≤ L ≤ 0 ≤ U ≤ 1` before `T`, and
    /// `A_T ≤ 1`.
    pub fn check_admissible_box(&self, ensemble: &BrownianEnsemble) -> Result<()> {
        let last = self.last();
        for i in 0..self.grid.len() {
            for k in 0..ensemble.states(i) {
                let ctx = self.ctx(i, ensemble.b(i, k));
                let mut vals = vec![(self.lower_left(&ctx), self.upper_left(&ctx), "left")];
                if i < last {
                    vals.push((self.lower_right(&ctx), self.upper_right(&ctx), "right"));
                }
                for (lo, up, side) in vals {
                    if !(-1.0..=0.0).contains(&lo) || !(0.0..=1.0).contains(&up) {
                        return Err(Error::InvalidInput(format!(
                            "barriers outside the admissible box at node {i} (t = {}), state {k}, {side} values: L = {lo}, U = {up}; pass raw mode to accept them",
                            ctx.t
                        )));
                    }
                }
            }
        }
        if self.a.terminal() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "A_T = {} exceeds 1",
                self.a.terminal()
            )));
        }
        Ok(())
    }
}
