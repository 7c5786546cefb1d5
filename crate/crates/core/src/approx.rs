//! Lipschitz approximation ladder: sup-convolutions of the generators,
//! truncation of the jump coefficient to the first `n` marks, and ordering
//! of jump times.

use std::sync::Arc;

use crate::coefficients::{CoefficientSet, NodeCtx};
use crate::error::{Error, Result};
use crate::grid::TIME_EPS;

/// Grid nodes per search dimension (64 cells) when the search has at most
/// two dimensions.
pub const GRID_POINTS: usize = 65;
/// Grid nodes per dimension for three- and four-dimensional searches.
pub const GRID_POINTS_HIGH_DIM: usize = 17;
pub const MAX_Z_DIM: usize = 3;
const GOLDEN_ITERS: usize = 70;
const REFINE_STARTS: usize = 3;
const REFINE_SWEEPS: usize = 40;

/// `sup_{p,q} { f(p, q) − n|p − y| − n|q − z| }` where `f(p, q)` is the
/// generator at a fixed node.
///
/// Any maximizer lies in `|p − y| + |q − z| ≤ (η + C|z|²)/n` when
/// `−η − C|q|² ≤ f ≤ 0`, so the search covers that box with a grid and
/// then refines the best few nodes by cyclic golden-section sweeps. The
/// result never drops
/// below `f(y, z)` since the box centre is a grid node.
pub fn sup_convolution(
    f: &dyn Fn(f64, &[f64]) -> f64,
    n: u32,
    y: f64,
    z: &[f64],
    eta: f64,
    c: f64,
) -> Result<f64> {
    sup_convolution_with(f, n, y, z, eta, c, true)
}

/// As [`sup_convolution`]; with `uses_z = false` the `q` search is skipped
/// (`q = z` is optimal when `f` ignores `z`).
pub fn sup_convolution_with(
    f: &dyn Fn(f64, &[f64]) -> f64,
    n: u32,
    y: f64,
    z: &[f64],
    eta: f64,
    c: f64,
    uses_z: bool,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    if z.len() > MAX_Z_DIM {
        return Err(Error::Unsupported(format!(
            "z dimension {} exceeds {MAX_Z_DIM}",
            z.len()
        )));
    }
    let nf = n as f64;
    let centre_value = f(y, z);
    let z2: f64 = z.iter().map(|v| v * v).sum();
    // The witness bound; widened if the supplied witness undershoots |f(y,z)|.
    let radius = ((eta + c * z2) / nf).max(-centre_value / nf).max(0.0);
    if radius == 0.0 {
        return Ok(centre_value);
    }

    let dims = if uses_z { 1 + z.len() } else { 1 };
    let centre: Vec<f64> = std::iter::once(y).chain(z.iter().copied()).collect();
    let mut q = z.to_vec();
    let mut objective = |u: &[f64]| -> f64 {
        let mut pen = (u[0] - y).abs();
        if uses_z {
            for (j, zj) in z.iter().enumerate() {
                q[j] = u[1 + j];
                pen += (u[1 + j] - zj).abs();
            }
        }
        f(u[0], &q) - nf * pen
    };

    let points = if dims <= 2 {
        GRID_POINTS
    } else {
        GRID_POINTS_HIGH_DIM
    };
    let half = (points - 1) / 2;
    let h = radius / half as f64;
    // Best few grid nodes, each refined below, so that a near tie between
    // separate basins is not settled by grid resolution.
    let mut top: Vec<(f64, Vec<f64>)> = vec![(centre_value, centre.clone())];
    let mut idx = vec![0usize; dims];
    let mut u = centre.clone();
    loop {
        for d in 0..dims {
            u[d] = centre[d] + (idx[d] as f64 - half as f64) * h;
        }
        let v = objective(&u[..]);
        if top.len() < REFINE_STARTS || v > top[top.len() - 1].0 {
            let pos = top.partition_point(|(w, _)| *w >= v);
            top.insert(pos, (v, u.clone()));
            top.truncate(REFINE_STARTS);
        }
        // Odometer increment.
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dims {
                break;
            }
        }
        if d == dims {
            break;
        }
    }

    let mut best_val = centre_value;
    for (v0, p0) in top {
        let v = refine(&mut objective, p0, v0, h, dims);
        best_val = best_val.max(v);
    }
    Ok(best_val)
}

/// Cyclic golden-section search over each coordinate within `±h`, repeated
/// until a sweep stops improving. The penalty kinks are axis aligned, so
/// coordinate moves can follow them.
fn refine(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    mut best: Vec<f64>,
    mut best_val: f64,
    h: f64,
    dims: usize,
) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..REFINE_SWEEPS {
        let before = best_val;
        for d in 0..dims {
            let mut a = best[d] - h;
            let mut b = best[d] + h;
            let mut probe = best.clone();
            let mut eval = |x: f64| {
                probe[d] = x;
                objective(&probe[..])
            };
            let mut x1 = b - inv_phi * (b - a);
            let mut x2 = a + inv_phi * (b - a);
            let mut f1 = eval(x1);
            let mut f2 = eval(x2);
            for _ in 0..GOLDEN_ITERS {
                if f1 < f2 {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + inv_phi * (b - a);
                    f2 = eval(x2);
                } else {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - inv_phi * (b - a);
                    f1 = eval(x1);
                }
            }
            let (x, v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
            if v > best_val {
                best_val = v;
                best[d] = x;
            }
        }
        if dims == 1 || best_val - before <= 1e-15 * (1.0 + best_val.abs()) {
            break;
        }
    }
    best_val
}

/// `h` at the first `n` enumerated marks, 0 elsewhere.
pub fn truncate_h(
    h: &dyn Fn(f64, f64) -> f64,
    marks: &[usize],
    n: usize,
    node: usize,
    x: f64,
    y: f64,
) -> f64 {
    if marks[..n.min(marks.len())].contains(&node) {
        h(x, y)
    } else {
        0.0
    }
}

/// `0 = S₀ < S₁ < … < S_n ≤ S_{n+1} = T` from the marks `T₁..T_n`.
pub fn order_jump_times(marks: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let mut sorted = marks.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if (w[1] - w[0]).abs() <= TIME_EPS {
            return Err(Error::InvalidInput(format!("duplicate jump mark {}", w[0])));
        }
    }
    if let Some(&t) = sorted
        .iter()
        .find(|&&t| !(t > 0.0 && t <= horizon + TIME_EPS))
    {
        return Err(Error::InvalidInput(format!(
            "jump mark {t} outside (0, {horizon}]"
        )));
    }
    let mut out = Vec::with_capacity(sorted.len() + 2);
    out.push(0.0);
    out.extend(sorted);
    out.push(horizon);
    Ok(out)
}

/// Node-index form of [`order_jump_times`]; `last` is the index of `T`.
pub fn order_mark_nodes(marks: &[usize], last: usize) -> Result<Vec<usize>> {
    let mut sorted = marks.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("duplicate jump marks".into()));
    }
    let mut out = Vec::with_capacity(sorted.len() + 2);
    out.push(0);
    out.extend(sorted);
    out.push(last);
    Ok(out)
}

/// First node where `|B| ≥ level`, as a path-dependent mark.
pub fn first_passage(b: &[f64], level: f64) -> Option<usize> {
    b.iter().position(|x| x.abs() >= level)
}

/// Level `n` of the approximation ladder as a coefficient set.
#[derive(Clone, Debug)]
pub struct LadderLevel {
    pub n: usize,
    pub active_marks: Vec<usize>,
    coefficients: CoefficientSet,
}

impl LadderLevel {
    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coefficients
    }

    pub fn f_n(&self, ctx: &NodeCtx, y: f64, z: f64) -> f64 {
        self.coefficients.f(ctx, y, z)
    }

    pub fn g_n(&self, ctx: &NodeCtx, y: f64) -> f64 {
        self.coefficients.g(ctx, y)
    }

    /// `h_n(t, x, y)`: `h` when node `ctx.step` is among the active marks.
    pub fn h_n(&self, ctx: &NodeCtx, x: f64, y: f64) -> f64 {
        if self.active_marks.contains(&ctx.step) {
            self.coefficients.h(ctx, x, y)
        } else {
            0.0
        }
    }
}

/// Builds level `n`. Level 0 has no generators and no jump coefficient.
///
/// The level-`n` generator is `min_{1≤k≤n}` of the computed sup-convolutions.
/// The exact envelopes already decrease in `k`; taking the minimum keeps
/// that ordering exact despite search error, and stays between `f` and the
/// exact `f_n`.
pub fn ladder_level(c: &CoefficientSet, n: usize) -> Result<LadderLevel> {
    let active: Vec<usize> = c.grid().marks().iter().take(n).copied().collect();
    let grid = c.grid().with_marks(active.clone())?;
    let mut level = c.clone().with_grid(grid)?.with_lipschitz(Some(n as f64));
    if n == 0 {
        level = level
            .with_driver_arc(None, false)
            .with_reaction_arc(None)
            .with_jump_arc(None);
    } else {
        if let Some(f) = c.driver().cloned() {
            let w = c.witnesses.clone();
            let uses_z = c.driver_uses_z();
            let fn_ = move |ctx: &NodeCtx, y: f64, z: &[f64]| -> f64 {
                let eta = (w.eta)(ctx);
                let cc = (w.c)(ctx);
                let base = |p: f64, q: &[f64]| f(ctx, p, q);
                (1..=n as u32)
                    .map(|k| {
                        sup_convolution_with(&base, k, y, z, eta, cc, uses_z)
                            .expect("z dimension checked by the solver")
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            level = level.with_driver_arc(Some(Arc::new(fn_)), uses_z);
        }
        if let Some(g) = c.reaction().cloned() {
            let beta = c.witnesses.beta.clone();
            let gn = move |ctx: &NodeCtx, y: f64| -> f64 {
                let b = beta(ctx);
                let base = |p: f64, _q: &[f64]| g(ctx, p);
                (1..=n as u32)
                    .map(|k| {
                        sup_convolution_with(&base, k, y, &[], b, 0.0, false)
                            .expect("scalar search")
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            level = level.with_reaction_arc(Some(Arc::new(gn)));
        }
    }
    Ok(LadderLevel {
        n,
        active_marks: active,
        coefficients: level,
    })
}
