//! Exponential change of variables.
//!
//! Along one Brownian path the data are mapped to barred data living in the
//! unit box: `Ȳ = e^{m(Y−S−m)} − e^{−m²}` with a dominating nondecreasing
//! process `m`. Barred values are evaluated as `e^{−m²}·expm1(m(Y−S))` and
//! inverted through `ln1p`, which keeps the round trip accurate while
//! `e^{m²}` is representable. That caps `m` at [`M_MAX`].
//!
//! Densities with respect to `Ā` are per-interval increment ratios; the
//! ratio of interval `i` is used at node `i`, and the last node gets 0.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::brownian::Topology;
use crate::coefficients::{CoefficientSet, DriverFn, JumpFn, NodeCtx, ReactionFn};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::{FiniteVariationPath, RcllPath};
use crate::solution::Solution;

/// Largest `m` for which `e^{m²}` stays finite with headroom.
pub const M_MAX: f64 = 26.0;

/// The data realized along a single Brownian path.
#[derive(Clone)]
pub struct CoefficientPath {
    pub grid: TimeGrid,
    pub ctx: Vec<NodeCtx>,
    pub lower: RcllPath,
    pub upper: RcllPath,
    pub terminal: f64,
    pub eta: Vec<f64>,
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    pub l: Vec<f64>,
    pub gamma: Vec<f64>,
    pub s0: f64,
    pub v: FiniteVariationPath,
    pub a: FiniteVariationPath,
    pub r: FiniteVariationPath,
    /// Brownian increments of each interval.
    pub db: Vec<f64>,
    pub f: Option<DriverFn>,
    pub g: Option<ReactionFn>,
    pub h: Option<JumpFn>,
}

impl CoefficientPath {
    pub fn f(&self, i: usize, y: f64, z: f64) -> f64 {
        self.f.as_ref().map_or(0.0, |f| f(&self.ctx[i], y, &[z]))
    }

    pub fn g(&self, i: usize, y: f64) -> f64 {
        self.g.as_ref().map_or(0.0, |g| g(&self.ctx[i], y))
    }

    pub fn h(&self, i: usize, x: f64, y: f64) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h(&self.ctx[i], x, y))
    }

    /// `S = S₀ + V + Σ γ ΔB`, with `γ` taken at the left end of each interval.
    pub fn semimartingale(&self) -> RcllPath {
        let n = self.grid.len();
        let v = self.v.values();
        let mut right = Vec::with_capacity(n);
        let mut stoch = 0.0;
        for (i, vi) in v.iter().enumerate().take(n) {
            if i > 0 {
                stoch += self.gamma[i - 1] * self.db[i - 1];
            }
            right.push(self.s0 + vi + stoch);
        }
        let left = right
            .iter()
            .zip(self.v.jump_increments())
            .map(|(s, j)| s - j)
            .collect();
        RcllPath::new(right, left).expect("consistent shapes")
    }
}

impl CoefficientSet {
    /// Evaluates every input along the Brownian path `b` (one value per node).
    pub fn along_path(&self, b: &[f64]) -> Result<CoefficientPath> {
        let grid = self.grid().clone();
        let n = grid.len();
        if b.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let sm = self.semimartingale.as_ref().ok_or_else(|| {
            Error::InvalidInput("the transform needs a semimartingale witness S".into())
        })?;
        let ctx: Vec<NodeCtx> = (0..n).map(|i| self.ctx(i, b[i])).collect();
        let col = |f: &dyn Fn(&NodeCtx) -> f64| ctx.iter().map(f).collect::<Vec<f64>>();
        let lower = RcllPath::new(col(&|c| self.lower_right(c)), col(&|c| self.lower_left(c)))?;
        let upper = RcllPath::new(col(&|c| self.upper_right(c)), col(&|c| self.upper_left(c)))?;
        Ok(CoefficientPath {
            terminal: self.terminal(&ctx[n - 1]),
            eta: col(&|c| self.eta(c)),
            c: col(&|c| self.quad(c)),
            beta: col(&|c| self.beta(c)),
            l: col(&|c| self.l(c)),
            gamma: col(&|c| (sm.gamma)(c)),
            s0: sm.s0,
            v: sm.v.clone(),
            a: self.a().clone(),
            r: self.r().clone(),
            db: b.windows(2).map(|w| w[1] - w[0]).collect(),
            f: self.driver().cloned(),
            g: self.reaction().cloned(),
            h: self.jump().cloned(),
            lower,
            upper,
            ctx,
            grid,
        })
    }
}

#[derive(Clone)]
pub struct TransformContext {
    /// `m` with its left limits.
    pub m: RcllPath,
    pub m_continuous: Vec<f64>,
    pub m_jumps: Vec<f64>,
    pub s: RcllPath,
    /// `η̄ = 2e^{−m}(η + γ²)` at nodes.
    pub eta_bar: Vec<f64>,
    /// `∫ η̄ ds` over each interval, exact for `m` linear in between nodes.
    pub eta_bar_integral: Vec<f64>,
    pub a_bar: FiniteVariationPath,
    /// Continuous part of `R̄` per interval.
    pub r_bar_continuous: Vec<f64>,
    /// Jumps `e^{3m²}Δm` of `R̄` (may overflow to `+∞`).
    pub r_bar_jumps: Vec<f64>,
    pub ratio_a: Vec<f64>,
    pub ratio_v: Vec<f64>,
    pub ratio_m: Vec<f64>,
}

impl TransformContext {
    pub fn m_at(&self, i: usize) -> f64 {
        self.m.right()[i]
    }

    pub fn m_left(&self, i: usize) -> f64 {
        self.m.left()[i]
    }

    pub fn a_bar_total(&self) -> f64 {
        self.a_bar.terminal()
    }

    pub fn eta_bar_total(&self) -> f64 {
        self.eta_bar_integral.iter().sum()
    }

    /// `R̄` as a path; fails if a jump overflowed.
    pub fn r_bar(&self) -> Result<FiniteVariationPath> {
        FiniteVariationPath::new(self.r_bar_continuous.clone(), self.r_bar_jumps.clone()).map_err(
            |_| Error::Transform("e^{3m²}Δm overflows f64; R̄ has no finite representation".into()),
        )
    }
}

/// `dX/dĀ` on one interval: `0/0 → 0`, `x/0` is an error.
fn density(x: f64, a_bar: f64, what: &str, i: usize) -> Result<f64> {
    if a_bar > 0.0 {
        Ok(x / a_bar)
    } else if x == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Transform(format!(
            "interval {i}: d{what} = {x} but dĀ = 0, so d{what}/dĀ is undefined"
        )))
    }
}

pub fn build_m(path: &CoefficientPath) -> Result<TransformContext> {
    let grid = &path.grid;
    let n = grid.len();
    for (name, v) in [
        ("eta", &path.eta),
        ("C", &path.c),
        ("beta", &path.beta),
        ("l", &path.l),
        ("gamma", &path.gamma),
    ] {
        if v.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Transform(format!("witness {name} is not finite")));
        }
        if name != "gamma" && v.iter().any(|&x| x < 0.0) {
            return Err(Error::Transform(format!(
                "witness {name} must be nonnegative"
            )));
        }
    }
    if path.r.has_jumps() || path.r.continuous_increments().iter().any(|&x| x != 0.0) {
        return Err(Error::Transform(
            "the transform applies to data without forcing R".into(),
        ));
    }
    if path.a.has_jumps() {
        return Err(Error::Transform(
            "A must be continuous for the transform".into(),
        ));
    }
    let s = path.semimartingale();
    for i in 0..n {
        let checks = [
            (
                path.lower.right()[i],
                s.right()[i],
                path.upper.right()[i],
                "right",
            ),
            (
                path.lower.left()[i],
                s.left()[i],
                path.upper.left()[i],
                "left",
            ),
        ];
        for (lo, sv, up, side) in checks {
            if !(lo <= sv + 1e-12 && sv <= up + 1e-12) || !lo.is_finite() || !up.is_finite() {
                return Err(Error::Transform(format!(
                    "node {i} ({side}): need L <= S <= U with finite barriers, got {lo} <= {sv} <= {up}"
                )));
            }
        }
    }

    // Running supremum of |U| + |C| + |L| over right and left values.
    let mut sup = Vec::with_capacity(n);
    let mut cur = f64::NEG_INFINITY;
    for i in 0..n {
        let left = path.upper.left()[i].abs() + path.c[i] + path.lower.left()[i].abs();
        let right = path.upper.right()[i].abs() + path.c[i] + path.lower.right()[i].abs();
        cur = cur.max(left).max(right);
        sup.push(cur);
    }

    let vc = path.v.continuous_increments();
    let vj = path.v.jump_increments();
    let da = path.a.continuous_increments();
    let mut m_cont = vec![0.0; n - 1];
    let mut m_jump = vec![0.0; n];
    let mut right = vec![0.0; n];
    right[0] = 4.0 * (sup[0] + 1.0);
    for i in 0..n - 1 {
        let g2 = path.gamma[i] * path.gamma[i];
        m_cont[i] = 4.0
            * (vc[i].abs() + (1.0 + path.eta[i] + g2) * grid.dt(i) + (1.0 + path.beta[i]) * da[i]);
        m_jump[i + 1] = 4.0 * ((sup[i + 1] - sup[i]) + vj[i + 1].abs() + path.l[i + 1]);
        right[i + 1] = right[i] + m_cont[i] + m_jump[i + 1];
    }
    let left: Vec<f64> = right.iter().zip(&m_jump).map(|(r, j)| r - j).collect();
    let m_max = right[n - 1];
    if m_max > M_MAX {
        return Err(Error::Transform(format!(
            "m_T = {m_max} exceeds {M_MAX}: e^(m^2) leaves double range; shrink barriers or witnesses"
        )));
    }

    let mut a_bar_inc = vec![0.0; n - 1];
    let mut eta_int = vec![0.0; n - 1];
    let eta_bar: Vec<f64> = (0..n)
        .map(|i| 2.0 * (-right[i]).exp() * (path.eta[i] + path.gamma[i] * path.gamma[i]))
        .collect();
    let mut ratio_a = vec![0.0; n];
    let mut ratio_v = vec![0.0; n];
    let mut ratio_m = vec![0.0; n];
    for i in 0..n - 1 {
        let em = (-right[i]).exp();
        // 2∫e^{-m} dm over a continuous rise of m_cont[i].
        a_bar_inc[i] = -2.0 * em * (-m_cont[i]).exp_m1();
        // m grows linearly in time inside the interval, and m_cont[i] ≥ 4·dt > 0.
        let w = path.eta[i] + path.gamma[i] * path.gamma[i];
        eta_int[i] = 2.0 * w * grid.dt(i) * em * (-(-m_cont[i]).exp_m1()) / m_cont[i];
        ratio_a[i] = density(da[i], a_bar_inc[i], "A", i)?;
        ratio_v[i] = density(vc[i], a_bar_inc[i], "V", i)?;
        ratio_m[i] = density(m_cont[i], a_bar_inc[i], "m", i)?;
    }
    let a_bar = FiniteVariationPath::new(a_bar_inc.clone(), vec![0.0; n])?;
    let r_bar_continuous = (0..n - 1)
        .map(|i| 0.5 * a_bar_inc[i] + 0.5 * eta_int[i])
        .collect();
    let r_bar_jumps = (0..n)
        .map(|i| {
            if m_jump[i] > 0.0 {
                (3.0 * right[i] * right[i]).exp() * m_jump[i]
            } else {
                0.0
            }
        })
        .collect();

    Ok(TransformContext {
        m: RcllPath::new(right, left)?,
        m_continuous: m_cont,
        m_jumps: m_jump,
        s,
        eta_bar,
        eta_bar_integral: eta_int,
        a_bar,
        r_bar_continuous,
        r_bar_jumps,
        ratio_a,
        ratio_v,
        ratio_m,
    })
}

/// `e^{m(v−s−m)} − e^{−m²}`.
pub fn bar(v: f64, s: f64, m: f64) -> f64 {
    (-m * m).exp() * (m * (v - s)).exp_m1()
}

/// Inverse of [`bar`]: `ln(ȳ + e^{−m²})/m + s + m`.
pub fn unbar(y_bar: f64, s: f64, m: f64) -> Result<f64> {
    let u = y_bar * (m * m).exp();
    if u.is_nan() || u <= -1.0 {
        return Err(Error::Transform(format!(
            "log argument Ȳ + e^(-m^2) is not positive (Ȳ = {y_bar}, m = {m})"
        )));
    }
    Ok(s + u.ln_1p() / m)
}

/// Barred data along one path.
#[derive(Clone)]
pub struct TransformedSet {
    path: Arc<CoefficientPath>,
    ctx: Arc<TransformContext>,
    pub xi_bar: f64,
    pub lower_bar: RcllPath,
    pub upper_bar: RcllPath,
    /// Constant added to `f̄`; nonzero only to exercise the verifier.
    pub f_bar_offset: f64,
}

pub fn forward_transform(path: &CoefficientPath, ctx: &TransformContext) -> Result<TransformedSet> {
    let n = path.grid.len();
    if ctx.m.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            got: ctx.m.len(),
        });
    }
    let barred = |b: &RcllPath| {
        let right = (0..n)
            .map(|i| bar(b.right()[i], ctx.s.right()[i], ctx.m_at(i)))
            .collect();
        let mut left: Vec<f64> = (0..n)
            .map(|i| bar(b.left()[i], ctx.s.left()[i], ctx.m_left(i)))
            .collect();
        left[0] = bar(b.right()[0], ctx.s.right()[0], ctx.m_at(0));
        RcllPath::new(right, left)
    };
    Ok(TransformedSet {
        xi_bar: bar(path.terminal, ctx.s.right()[n - 1], ctx.m_at(n - 1)),
        lower_bar: barred(&path.lower)?,
        upper_bar: barred(&path.upper)?,
        path: Arc::new(path.clone()),
        ctx: Arc::new(ctx.clone()),
        f_bar_offset: 0.0,
    })
}

impl TransformedSet {
    pub fn context(&self) -> &TransformContext {
        &self.ctx
    }

    pub fn path(&self) -> &CoefficientPath {
        &self.path
    }

    pub fn nodes(&self) -> usize {
        self.path.grid.len()
    }

    fn clip(&self, i: usize, y: f64) -> f64 {
        y.clamp(self.lower_bar.right()[i], self.upper_bar.right()[i])
    }

    fn clip_left(&self, i: usize, x: f64) -> f64 {
        x.clamp(self.lower_bar.left()[i], self.upper_bar.left()[i])
    }

    /// `f̃(s, y, z)` for `y ≥ L̄_s`.
    pub fn f_tilde(&self, i: usize, y: f64, z: f64) -> f64 {
        let m = self.ctx.m_at(i);
        let e = y + (-m * m).exp();
        let y_orig = e.ln() / m + m + self.ctx.s.right()[i];
        let z_orig = z / (m * e) + self.path.gamma[i];
        m * e * self.path.f(i, y_orig, z_orig) - z * z / (2.0 * e)
    }

    pub fn g_tilde(&self, i: usize, y: f64) -> f64 {
        let m = self.ctx.m_at(i);
        let floor = (-m * m).exp();
        let e = y + floor;
        let ln_e = e.ln();
        let y_orig = ln_e / m + m + self.ctx.s.right()[i];
        let rm = self.ctx.ratio_m[i];
        m * e * (self.path.g(i, y_orig) * self.ctx.ratio_a[i] + self.ctx.ratio_v[i] + rm)
            - 2.0 * m * floor * rm
            - e * (ln_e / m) * rm
    }

    /// `h̃(s, x, y)` for `x ≥ L̄_{s−}`, `y ≥ L̄_s`.
    pub fn h_tilde(&self, i: usize, x: f64, y: f64) -> f64 {
        let m = self.ctx.m_at(i);
        let ml = self.ctx.m_left(i);
        let s = self.ctx.s.right()[i];
        let sl = self.ctx.s.left()[i];
        let ly = (y + (-m * m).exp()).ln() / m;
        let x_orig = (x + (-ml * ml).exp()).ln() / ml + sl + ml;
        let y_orig = ly + s + m;
        let jump = self.path.h(i, x_orig, y_orig);
        let exponent = ml * (ly + jump + (s - sl) + self.ctx.m_jumps[i]);
        exponent.exp() - y - (-ml * ml).exp()
    }

    pub fn f_bar(&self, i: usize, y: f64, z: f64) -> f64 {
        self.f_tilde(i, self.clip(i, y), z) - 0.5 * self.ctx.eta_bar[i] + self.f_bar_offset
    }

    pub fn g_bar(&self, i: usize, y: f64) -> f64 {
        self.g_tilde(i, self.clip(i, y)) - 0.5
    }

    /// `h̃` at clipped arguments; `h̄` is this minus `e^{3m²}Δm`.
    pub fn h_tilde_clipped(&self, i: usize, x: f64, y: f64) -> f64 {
        self.h_tilde(i, self.clip_left(i, x), self.clip(i, y))
    }

    /// `h̄(s, x, y)`; may be `−∞` when `e^{3m²}` overflows.
    pub fn h_bar(&self, i: usize, x: f64, y: f64) -> f64 {
        self.h_tilde_clipped(i, x, y) - self.ctx.r_bar_jumps[i]
    }

    /// `Δ_s e^{−m²}`.
    pub fn delta_floor(&self, i: usize) -> f64 {
        let m = self.ctx.m_at(i);
        let ml = self.ctx.m_left(i);
        (-m * m).exp() - (-ml * ml).exp()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BoundWitness {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub id: &'static str,
    pub worst_margin: f64,
    pub witness: BoundWitness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub samples: usize,
    pub records: Vec<BoundRecord>,
}

pub const BOUND_TOL: f64 = 1e-12;

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.worst_margin >= -BOUND_TOL)
    }

    pub fn worst(&self) -> Option<&BoundRecord> {
        self.records
            .iter()
            .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin))
    }

    pub fn get(&self, id: &str) -> Option<&BoundRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBox {
    pub y: f64,
    pub z: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self { y: 2.0, z: 3.0 }
    }
}

const SAMPLED_IDS: [&str; 7] = [
    "f_bar.upper",
    "f_bar.lower",
    "g_bar.upper",
    "g_bar.lower",
    "h_tilde.monotone",
    "h_tilde.upper",
    "h_tilde.lower",
];

fn fold_min(acc: &mut [(f64, BoundWitness)], k: usize, margin: f64, w: BoundWitness) {
    // NaN margins count as failures.
    let m = if margin.is_nan() {
        f64::NEG_INFINITY
    } else {
        margin
    };
    if m < acc[k].0 {
        acc[k] = (m, w);
    }
}

pub fn verify_bounds(ts: &TransformedSet, samples: usize, seed: u64) -> BoundReport {
    verify_bounds_in(ts, samples, seed, SamplingBox::default())
}

pub fn verify_bounds_in(
    ts: &TransformedSet,
    samples: usize,
    seed: u64,
    bx: SamplingBox,
) -> BoundReport {
    let n = ts.nodes();
    let ctx = ts.context();
    let mut records = Vec::new();

    let a_total = ctx.a_bar_total();
    let zero = BoundWitness::default();
    records.push(BoundRecord {
        id: "eta_bar_integral",
        worst_margin: a_total - ctx.eta_bar_total(),
        witness: zero,
    });
    records.push(BoundRecord {
        id: "a_bar_total",
        worst_margin: 1.0 - a_total,
        witness: zero,
    });
    let mut box4 = (f64::INFINITY, zero);
    for i in 0..n {
        for (lo, up) in [
            (ts.lower_bar.right()[i], ts.upper_bar.right()[i]),
            (ts.lower_bar.left()[i], ts.upper_bar.left()[i]),
        ] {
            let margin = (lo + 1.0).min(-lo).min(up).min(1.0 - up);
            if margin < box4.0 {
                box4 = (
                    margin,
                    BoundWitness {
                        node: i,
                        x: lo,
                        y: up,
                        z: 0.0,
                    },
                );
            }
        }
    }
    records.push(BoundRecord {
        id: "barrier_box",
        worst_margin: box4.0,
        witness: box4.1,
    });
    records.push(BoundRecord {
        id: "terminal",
        worst_margin: -ts.xi_bar.abs(),
        witness: BoundWitness {
            node: n - 1,
            ..zero
        },
    });

    let eval = |acc: &mut [(f64, BoundWitness)], i: usize, x: f64, y: f64, y2: f64, z: f64| {
        let w = BoundWitness { node: i, x, y, z };
        let m = ctx.m_at(i);
        let f = ts.f_bar(i, y, z);
        fold_min(acc, 0, -f, w);
        let big = (2.0 * m * m).exp() * z * z;
        fold_min(acc, 1, f + ctx.eta_bar[i] + big, w);
        let g = ts.g_bar(i, y);
        fold_min(acc, 2, -g, w);
        fold_min(acc, 3, g + 1.0, w);
        if i > 0 {
            let (lo, hi) = if y <= y2 { (y, y2) } else { (y2, y) };
            let mono = (hi + ts.h_tilde_clipped(i, x, hi)) - (lo + ts.h_tilde_clipped(i, x, lo));
            fold_min(
                acc,
                4,
                mono,
                BoundWitness {
                    node: i,
                    x,
                    y: lo,
                    z: hi,
                },
            );
            let ht = ts.h_tilde_clipped(i, x, y);
            fold_min(acc, 5, ctx.r_bar_jumps[i] - ht, w);
            fold_min(acc, 6, ht - ts.delta_floor(i), w);
        }
    };

    // Anchors: z = 0 (where the quadratic term vanishes) at the box edges
    // and at the barred barriers of every node.
    let mut acc = vec![(f64::INFINITY, zero); SAMPLED_IDS.len()];
    for i in 0..n {
        let ys = [
            -bx.y,
            ts.lower_bar.right()[i],
            0.0,
            ts.upper_bar.right()[i],
            bx.y,
        ];
        for &y in &ys {
            for &y2 in &ys {
                eval(&mut acc, i, y, y, y2, 0.0);
            }
        }
    }

    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let init = vec![(f64::INFINITY, zero); SAMPLED_IDS.len()];
    let partial: Vec<Vec<(f64, BoundWitness)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut local = init.clone();
            let count = CHUNK.min(samples - c * CHUNK);
            for _ in 0..count {
                let i = rng.random_range(0..n);
                let y = rng.random_range(-bx.y..=bx.y);
                let y2 = rng.random_range(-bx.y..=bx.y);
                let x = rng.random_range(-bx.y..=bx.y);
                let z = rng.random_range(-bx.z..=bx.z);
                eval(&mut local, i, x, y, y2, z);
            }
            local
        })
        .collect();
    for part in partial {
        for (k, (m, w)) in part.into_iter().enumerate() {
            if m < acc[k].0 {
                acc[k] = (m, w);
            }
        }
    }
    for (k, id) in SAMPLED_IDS.iter().enumerate() {
        records.push(BoundRecord {
            id,
            worst_margin: acc[k].0,
            witness: acc[k].1,
        });
    }
    BoundReport { samples, records }
}

/// Barred image of a single-path solution of the original equation.
pub fn forward_solution(
    sol: &Solution,
    path: &CoefficientPath,
    ctx: &TransformContext,
) -> Result<Solution> {
    let n = path.grid.len();
    check_single_path(sol, n)?;
    let ts = forward_transform(path, ctx)?;
    let mut out = Solution::empty(Topology::Paths(1), sol.times.clone());
    out.marks = sol.marks.clone();
    for i in 0..n {
        let m = ctx.m_at(i);
        let ml = ctx.m_left(i);
        let s = ctx.s.right()[i];
        let y = sol.y[i][0];
        out.y[i][0] = bar(y, s, m);
        out.y_left[i][0] = if i == 0 {
            out.y[i][0]
        } else {
            bar(sol.y_left[i][0], ctx.s.left()[i], ml)
        };
        let e = (m * (y - s - m)).exp();
        if i + 1 < n {
            out.z[i][0] = m * e * (sol.z[i][0] - path.gamma[i]);
            out.kp_cont[i][0] = m * e * sol.kp_cont[i][0];
            out.km_cont[i][0] = m * e * sol.km_cont[i][0];
        }
        if i > 0 {
            let w = y + path.h(i, sol.y_left[i][0], y);
            let wb = bar(w, ctx.s.left()[i], ml);
            out.kp_jump[i][0] = (ts.lower_bar.left()[i] - wb).max(0.0);
            out.km_jump[i][0] = (wb - ts.upper_bar.left()[i]).max(0.0);
            out.jumps.pre[i][0] = wb;
        }
        out.lower[i][0] = ts.lower_bar.right()[i];
        out.lower_left[i][0] = ts.lower_bar.left()[i];
        out.upper[i][0] = ts.upper_bar.right()[i];
        out.upper_left[i][0] = ts.upper_bar.left()[i];
    }
    Ok(out)
}

/// Maps a barred single-path solution back to the original variables.
pub fn inverse_transform(
    barred: &Solution,
    path: &CoefficientPath,
    ctx: &TransformContext,
) -> Result<Solution> {
    let n = path.grid.len();
    check_single_path(barred, n)?;
    let mut out = Solution::empty(Topology::Paths(1), barred.times.clone());
    out.marks = barred.marks.clone();
    for i in 0..n {
        let m = ctx.m_at(i);
        let s = ctx.s.right()[i];
        let yb = barred.y[i][0];
        let y = unbar(yb, s, m)?;
        out.y[i][0] = y;
        out.y_left[i][0] = if i == 0 {
            y
        } else {
            unbar(barred.y_left[i][0], ctx.s.left()[i], ctx.m_left(i))?
        };
        // Ȳ + e^{−m²} = e^{m(Y−S−m)}.
        let e = (m * (y - s - m)).exp();
        if i + 1 < n {
            out.z[i][0] = barred.z[i][0] / (m * e) + path.gamma[i];
            out.kp_cont[i][0] = barred.kp_cont[i][0] / (m * e);
            out.km_cont[i][0] = barred.km_cont[i][0] / (m * e);
        }
        if i > 0 {
            let w = y + path.h(i, out.y_left[i][0], y);
            out.kp_jump[i][0] = (path.lower.left()[i] - w).max(0.0);
            out.km_jump[i][0] = (w - path.upper.left()[i]).max(0.0);
            out.jumps.pre[i][0] = w;
        }
        out.lower[i][0] = path.lower.right()[i];
        out.lower_left[i][0] = path.lower.left()[i];
        out.upper[i][0] = path.upper.right()[i];
        out.upper_left[i][0] = path.upper.left()[i];
    }
    Ok(out)
}

fn check_single_path(sol: &Solution, n: usize) -> Result<()> {
    if sol.nodes() != n {
        return Err(Error::GridMismatch {
            expected: n,
            got: sol.nodes(),
        });
    }
    if sol.topology != Topology::Paths(1) {
        return Err(Error::InvalidInput(
            "the transform acts on a single path; extract one first".into(),
        ));
    }
    Ok(())
}
