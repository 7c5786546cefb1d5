//! Grid-sampled rcll paths and finite-variation paths.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Right values `X_{t_i}` and left limits `X_{t_i-}` at every node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RcllPath {
    right: Vec<f64>,
    left: Vec<f64>,
}

impl RcllPath {
    pub fn new(right: Vec<f64>, left: Vec<f64>) -> Result<Self> {
        if right.len() != left.len() {
            return Err(Error::GridMismatch {
                expected: right.len(),
                got: left.len(),
            });
        }
        if right.is_empty() {
            return Err(Error::InvalidInput("empty path".into()));
        }
        if left[0] != right[0] {
            return Err(Error::InvalidInput(format!(
                "left value at 0 ({}) must equal right value ({})",
                left[0], right[0]
            )));
        }
        Ok(Self { right, left })
    }

    /// Path without jumps.
    pub fn continuous(values: Vec<f64>) -> Self {
        Self {
            left: values.clone(),
            right: values,
        }
    }

    pub fn constant(value: f64, nodes: usize) -> Self {
        Self::continuous(vec![value; nodes])
    }

    pub fn len(&self) -> usize {
        self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn jump(&self, i: usize) -> f64 {
        self.right[i] - self.left[i]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            right: self.right.iter().map(|&x| f(x)).collect(),
            left: self.left.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Signed finite-variation path: per-interval continuous increments plus
/// per-node jumps. Interval `i` is `(t_i, t_{i+1}]`; `jumps[0]` is always 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteVariationPath {
    continuous: Vec<f64>,
    jumps: Vec<f64>,
}

impl FiniteVariationPath {
    pub fn zero(nodes: usize) -> Self {
        Self {
            continuous: vec![0.0; nodes.saturating_sub(1)],
            jumps: vec![0.0; nodes],
        }
    }

    pub fn new(continuous: Vec<f64>, jumps: Vec<f64>) -> Result<Self> {
        if continuous.len() + 1 != jumps.len() {
            return Err(Error::GridMismatch {
                expected: continuous.len() + 1,
                got: jumps.len(),
            });
        }
        if jumps[0] != 0.0 {
            return Err(Error::InvalidInput("a path cannot jump at time 0".into()));
        }
        if continuous.iter().chain(&jumps).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite increment".into()));
        }
        Ok(Self { continuous, jumps })
    }

    /// Continuous path through the given node values (value at 0 dropped).
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            continuous: values.windows(2).map(|w| w[1] - w[0]).collect(),
            jumps: vec![0.0; values.len()],
        }
    }

    /// `s ↦ rate·s` on the grid.
    pub fn linear(grid: &TimeGrid, rate: f64) -> Self {
        Self {
            continuous: (0..grid.steps()).map(|i| rate * grid.dt(i)).collect(),
            jumps: vec![0.0; grid.len()],
        }
    }

    pub fn nodes(&self) -> usize {
        self.jumps.len()
    }

    pub fn continuous_increments(&self) -> &[f64] {
        &self.continuous
    }

    pub fn jump_increments(&self) -> &[f64] {
        &self.jumps
    }

    pub fn continuous_mut(&mut self) -> &mut [f64] {
        &mut self.continuous
    }

    pub fn jumps_mut(&mut self) -> &mut [f64] {
        &mut self.jumps
    }

    pub fn value(&self, i: usize) -> f64 {
        self.continuous[..i].iter().sum::<f64>() + self.jumps[..=i].iter().sum::<f64>()
    }

    pub fn left_value(&self, i: usize) -> f64 {
        self.value(i) - self.jumps[i]
    }

    /// Right values at every node, accumulated in time order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.jumps.len());
        let mut acc = 0.0;
        for i in 0..self.jumps.len() {
            if i > 0 {
                acc += self.continuous[i - 1];
            }
            acc += self.jumps[i];
            out.push(acc);
        }
        out
    }

    pub fn as_rcll(&self) -> RcllPath {
        let right = self.values();
        let left = right.iter().zip(&self.jumps).map(|(v, j)| v - j).collect();
        RcllPath { right, left }
    }

    pub fn terminal(&self) -> f64 {
        self.value(self.jumps.len() - 1)
    }

    /// Running total variation at every node.
    pub fn variation_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.jumps.len());
        let mut acc = 0.0;
        for i in 0..self.jumps.len() {
            if i > 0 {
                acc += self.continuous[i - 1].abs();
            }
            acc += self.jumps[i].abs();
            out.push(acc);
        }
        out
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.continuous.iter().chain(&self.jumps).all(|&x| x >= 0.0)
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.iter().any(|&x| x != 0.0)
    }

    fn map_increments(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            continuous: self.continuous.iter().map(|&x| f(x)).collect(),
            jumps: self.jumps.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Positive part of the Jordan decomposition.
    pub fn positive_part(&self) -> Self {
        self.map_increments(|x| x.max(0.0))
    }

    /// Negative part of the Jordan decomposition (nondecreasing).
    pub fn negative_part(&self) -> Self {
        self.map_increments(|x| (-x).max(0.0))
    }

    pub fn continuous_part(&self) -> Self {
        Self {
            continuous: self.continuous.clone(),
            jumps: vec![0.0; self.jumps.len()],
        }
    }

    pub fn jump_part(&self) -> Self {
        Self {
            continuous: vec![0.0; self.continuous.len()],
            jumps: self.jumps.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_increments(|x| a * x)
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.nodes() != other.nodes() {
            return Err(Error::GridMismatch {
                expected: self.nodes(),
                got: other.nodes(),
            });
        }
        Ok(Self {
            continuous: self
                .continuous
                .iter()
                .zip(&other.continuous)
                .map(|(a, b)| a + b)
                .collect(),
            jumps: self
                .jumps
                .iter()
                .zip(&other.jumps)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// `|p|_t`: absolute continuous increments plus absolute jumps on `(0, t]`.
pub fn total_variation(p: &FiniteVariationPath, grid: &TimeGrid, t: f64) -> Result<f64> {
    if p.nodes() != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: p.nodes(),
        });
    }
    let i = grid.require_index(t)?;
    Ok(p.variation_values()[i])
}

/// `∫ φ dK`: right values of `φ` against continuous increments of interval
/// `i` (evaluated at its left end `t_i`) and left values against jumps.
pub fn integrate_against(phi: &RcllPath, k: &FiniteVariationPath) -> Result<f64> {
    if phi.len() != k.nodes() {
        return Err(Error::GridMismatch {
            expected: k.nodes(),
            got: phi.len(),
        });
    }
    let cont: f64 = k
        .continuous
        .iter()
        .zip(&phi.right)
        .map(|(dk, p)| p * dk)
        .sum();
    let jumps: f64 = k.jumps.iter().zip(&phi.left).map(|(dk, p)| p * dk).sum();
    Ok(cont + jumps)
}

/// First node where `Σ_{r≤s} l_r + C_s + |R|_s ≥ j`, or `T`.
pub fn truncation_time(
    grid: &TimeGrid,
    l_mass: &[f64],
    c: &[f64],
    r_variation: &[f64],
    j: f64,
) -> Result<f64> {
    let n = grid.len();
    for (name, v) in [("l", l_mass), ("C", c), ("|R|", r_variation)] {
        if v.len() != n {
            return Err(Error::InvalidInput(format!(
                "witness {name} has {} values, grid has {n} nodes",
                v.len()
            )));
        }
    }
    let mut acc_l = 0.0;
    for i in 0..n {
        acc_l += l_mass[i];
        if acc_l + c[i] + r_variation[i] >= j {
            return Ok(grid.t(i));
        }
    }
    Ok(grid.horizon())
}
