//! Discrete Dynkin game on the non-recombining path tree.
//!
//! Stopping instants are `0, 1−, 1, 2−, …, N−, N`. The minimizer stops at
//! `U`, the maximizer at `L`, the minimizer wins ties, and both are stopped
//! at `N` with payoff `ξ`. Payoffs include the forcing `R` accrued since
//! time 0. Every pure strategy of the minimizer is enumerated; against each
//! one the maximizer's best response is exact by backward recursion.

use crate::brownian::BrownianEnsemble;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};

pub const MAX_DYNKIN_DEPTH: usize = 6;
/// Up to this depth every minimizer strategy is evaluated separately.
pub const EXHAUSTIVE_DEPTH: usize = 4;

struct Game<'a> {
    c: &'a CoefficientSet,
    sqrt_dt: f64,
    n: usize,
    prune: bool,
}

struct NodeData {
    acc_left: f64,
    acc: f64,
    lower_left: f64,
    upper_left: f64,
    lower: f64,
    upper: f64,
}

impl Game<'_> {
    fn data(&self, i: usize, ups: usize, acc_prev: f64) -> NodeData {
        let b = (2.0 * ups as f64 - i as f64) * self.sqrt_dt;
        let ctx = self.c.ctx(i, b);
        let r = self.c.r();
        let acc_left = if i == 0 {
            0.0
        } else {
            acc_prev + r.continuous_increments()[i - 1]
        };
        let acc = acc_left + if i == 0 { 0.0 } else { r.jump_increments()[i] };
        NodeData {
            acc_left,
            acc,
            lower_left: self.c.lower_left(&ctx),
            upper_left: self.c.upper_left(&ctx),
            lower: self.c.lower_right(&ctx),
            upper: self.c.upper_right(&ctx),
        }
    }

    /// Values of the game, one per minimizer strategy in the subtree rooted
    /// at the path node `(i, ups)`, each against the maximizer's best
    /// response. With pruning only the smallest value is kept.
    fn values(&self, i: usize, ups: usize, acc_prev: f64) -> Vec<f64> {
        let d = self.data(i, ups, acc_prev);
        let l_left = d.acc_left + d.lower_left;
        let u_left = d.acc_left + d.upper_left;
        let mut out = Vec::new();
        if i == self.n {
            // ξ = L_T = U_T.
            let terminal = d.acc + d.lower;
            out.push(u_left);
            out.push(l_left.max(terminal));
        } else {
            let up_stop = d.acc + d.upper;
            let low_stop = d.acc + d.lower;
            if i > 0 {
                out.push(u_left);
                out.push(l_left.max(up_stop));
            } else {
                out.push(up_stop);
            }
            let floor = if i > 0 {
                l_left.max(low_stop)
            } else {
                low_stop
            };
            let a = self.values(i + 1, ups + 1, d.acc);
            let b = self.values(i + 1, ups, d.acc);
            for &wu in &a {
                for &wd in &b {
                    out.push(floor.max(0.5 * (wu + wd)));
                }
            }
        }
        if self.prune {
            let m = out.iter().copied().fold(f64::INFINITY, f64::min);
            vec![m]
        } else {
            out
        }
    }

    fn root(&self) -> f64 {
        if self.n == 0 {
            return self.data(0, 0, 0.0).lower;
        }
        let d = self.data(0, 0, 0.0);
        let a = self.values(1, 1, d.acc);
        let b = self.values(1, 0, d.acc);
        // Root strategy pairs are evaluated on the fly rather than stored.
        let mut best = d.acc + d.upper;
        let floor = d.acc + d.lower;
        for &wu in &a {
            for &wd in &b {
                best = best.min(floor.max(0.5 * (wu + wd)));
            }
        }
        best
    }
}

/// Game value at time 0 for a tree ensemble and zero generators.
///
/// Depths up to [`EXHAUSTIVE_DEPTH`] enumerate every minimizer strategy;
/// depths up to [`MAX_DYNKIN_DEPTH`] keep only the best strategy per
/// subtree, which is exact because the best response is monotone in the
/// continuation values.
pub fn dynkin_value_bruteforce(c: &CoefficientSet, ens: &BrownianEnsemble) -> Result<f64> {
    if !ens.is_tree() {
        return Err(Error::Unsupported(
            "the Dynkin oracle needs the tree ensemble".into(),
        ));
    }
    if !c.is_zero_generator() {
        return Err(Error::InvalidInput(
            "the Dynkin oracle needs f = g = h = 0".into(),
        ));
    }
    let n = ens.grid().steps();
    if n > MAX_DYNKIN_DEPTH {
        return Err(Error::InvalidInput(format!(
            "Dynkin brute force is limited to depth {MAX_DYNKIN_DEPTH}, got {n}"
        )));
    }
    if c.grid().len() != ens.grid().len() {
        return Err(Error::GridMismatch {
            expected: ens.grid().len(),
            got: c.grid().len(),
        });
    }
    c.validate(ens)?;
    let game = Game {
        c,
        sqrt_dt: ens.grid().dt(0).sqrt(),
        n,
        prune: n > EXHAUSTIVE_DEPTH,
    };
    Ok(game.root())
}

/// Number of minimizer strategies enumerated at a given depth (root pairs
/// included).
pub fn strategy_count(depth: usize) -> u128 {
    if depth == 0 {
        return 1;
    }
    let mut s: u128 = 2;
    for _ in 1..depth {
        s = 2 + s * s;
    }
    1 + s * s
}
