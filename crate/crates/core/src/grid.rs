//! Time grids with designated jump marks.
//!
//! A grid starts uniform. Each requested jump time snaps to the nearest
//! uniform node when it lies within a quarter step of it and that node is
//! still free; otherwise a node is inserted at the exact time.

use serde::Serialize;

use crate::error::{Error, Result};

/// Two times closer than this are treated as the same node.
pub const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
    /// Node indices of the jump marks, in the order the caller enumerated them.
    marks: Vec<usize>,
    is_mark: Vec<bool>,
    uniform: bool,
}

impl TimeGrid {
    /// Grid from explicit nodes and mark indices (enumeration order kept).
    pub fn from_nodes(nodes: Vec<f64>, marks: Vec<usize>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Grid("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Grid(format!(
                "first node must be 0, got {}",
                nodes[0]
            )));
        }
        for w in nodes.windows(2) {
            let gap = w[1] - w[0];
            if gap.is_nan() || gap <= TIME_EPS || !w[1].is_finite() {
                return Err(Error::Grid(format!(
                    "nodes not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let n = nodes.len();
        let mut is_mark = vec![false; n];
        for &m in &marks {
            if m == 0 || m >= n {
                return Err(Error::Grid(format!(
                    "mark index {m} outside (0, {}]",
                    n - 1
                )));
            }
            if is_mark[m] {
                return Err(Error::Grid(format!(
                    "duplicate jump mark at t = {}",
                    nodes[m]
                )));
            }
            is_mark[m] = true;
        }
        let horizon = nodes[n - 1];
        let dt0 = nodes[1] - nodes[0];
        let uniform = nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt0).abs() <= 1e-12 * horizon.max(1.0));
        Ok(Self {
            horizon,
            nodes,
            marks,
            is_mark,
            uniform,
        })
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        build_grid(horizon, steps, &[])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of nodes (steps + 1).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Length of interval `i`, i.e. `t_{i+1} - t_i`.
    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn is_mark(&self, i: usize) -> bool {
        self.is_mark[i]
    }

    /// Mark indices sorted by time.
    pub fn sorted_marks(&self) -> Vec<usize> {
        let mut m = self.marks.clone();
        m.sort_unstable();
        m
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&x| x < t - TIME_EPS);
        (i < self.nodes.len() && (self.nodes[i] - t).abs() <= TIME_EPS).then_some(i)
    }

    pub fn require_index(&self, t: f64) -> Result<usize> {
        self.index_of(t).ok_or(Error::OffGrid { t })
    }

    /// Same grid with a different mark list (used by the ladder).
    pub fn with_marks(&self, marks: Vec<usize>) -> Result<Self> {
        Self::from_nodes(self.nodes.clone(), marks)
    }
}

pub fn build_grid(horizon: f64, steps: usize, jump_times: &[f64]) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::Grid("step count must be at least 1".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Grid(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let dt = horizon / steps as f64;
    let uniform: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { horizon } else { k as f64 * dt })
        .collect();

    let mut claimed = vec![false; steps + 1];
    let mut inserted: Vec<f64> = Vec::new();
    let mut mark_times: Vec<f64> = Vec::with_capacity(jump_times.len());
    for &tau in jump_times {
        if !(tau > 0.0 && tau <= horizon + TIME_EPS) || !tau.is_finite() {
            return Err(Error::Grid(format!(
                "jump time {tau} outside (0, {horizon}]"
            )));
        }
        let k = ((tau / dt).round() as usize).min(steps);
        let dist = (tau - uniform[k]).abs();
        if k >= 1 && dist <= 0.25 * dt && !claimed[k] {
            claimed[k] = true;
            mark_times.push(uniform[k]);
            continue;
        }
        let taken = dist <= TIME_EPS || inserted.iter().any(|&s| (s - tau).abs() <= TIME_EPS);
        if taken {
            return Err(Error::Grid(format!(
                "duplicate jump time {tau}: node already marked and no room to insert"
            )));
        }
        inserted.push(tau);
        mark_times.push(tau);
    }

    let mut nodes = uniform;
    nodes.extend_from_slice(&inserted);
    nodes.sort_by(f64::total_cmp);
    let marks = mark_times
        .iter()
        .map(|&t| {
            let i = nodes.partition_point(|&x| x < t);
            debug_assert_eq!(nodes[i], t);
            i
        })
        .collect();
    TimeGrid::from_nodes(nodes, marks)
}
