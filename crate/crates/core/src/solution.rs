//! Discrete solutions `(Y, Z, K⁺, K⁻)` stored per node and state.

use serde::Serialize;

use crate::brownian::Topology;
use crate::error::{Error, Result};
use crate::process::{FiniteVariationPath, RcllPath};

/// `field[i][k]`: value at node (or interval) `i`, state `k`.
pub type NodeField = Vec<Vec<f64>>;

pub(crate) fn field(topology: Topology, nodes: usize, fill: f64) -> NodeField {
    (0..nodes).map(|i| vec![fill; topology.states(i)]).collect()
}

/// Per-node jump-reflection data, kept so the jump identities can be audited.
#[derive(Debug, Clone, Default, Serialize)]
pub struct JumpTrace {
    /// Forcing added at the node (`ΔR` plus any `g ΔA` jump).
    pub forcing: NodeField,
    /// Pre-clipping value `w = Y_t + h(t, Y_{t-}, Y_t) + ΔR`.
    pub pre: NodeField,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub topology: Topology,
    pub times: Vec<f64>,
    /// Nodes where the jump coefficient was applied, in time order.
    pub marks: Vec<usize>,
    pub y: NodeField,
    pub y_left: NodeField,
    /// One entry per interval, at the states of its left node.
    pub z: NodeField,
    pub kp_cont: NodeField,
    pub km_cont: NodeField,
    /// One entry per node; node 0 carries no jump.
    pub kp_jump: NodeField,
    pub km_jump: NodeField,
    pub lower: NodeField,
    pub lower_left: NodeField,
    pub upper: NodeField,
    pub upper_left: NodeField,
    pub jumps: JumpTrace,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SkorokhodDiagnostics {
    /// Worst path value of `∫(Y₋ − L₋) dK⁺`.
    pub lower_residual: f64,
    /// Worst path value of `∫(U₋ − Y₋) dK⁻`.
    pub upper_residual: f64,
    /// Largest `min(ΔK⁺, ΔK⁻)` over all atoms.
    pub singularity: f64,
    /// Largest total mass `K⁺_T + K⁻_T` along a path.
    pub k_mass: f64,
    /// Largest excursion of `Y` outside `[L, U]` before `T`.
    pub barrier_violation: f64,
}

impl Solution {
    /// All fields zero.
    pub fn empty(topology: Topology, times: Vec<f64>) -> Self {
        let n = times.len();
        let f = |count: usize, fill: f64| field(topology, count, fill);
        Self {
            topology,
            marks: Vec::new(),
            y: f(n, 0.0),
            y_left: f(n, 0.0),
            z: f(n - 1, 0.0),
            kp_cont: f(n - 1, 0.0),
            km_cont: f(n - 1, 0.0),
            kp_jump: f(n, 0.0),
            km_jump: f(n, 0.0),
            lower: f(n, 0.0),
            lower_left: f(n, 0.0),
            upper: f(n, 0.0),
            upper_left: f(n, 0.0),
            jumps: JumpTrace {
                forcing: f(n, 0.0),
                pre: f(n, 0.0),
            },
            times,
        }
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    pub fn states(&self, i: usize) -> usize {
        self.y[i].len()
    }

    /// Largest `|Y¹ − Y²|` over right and left values.
    pub fn sup_gap(&self, other: &Solution) -> Result<f64> {
        self.check_shape(other)?;
        let mut gap: f64 = 0.0;
        for (a, b) in [(&self.y, &other.y), (&self.y_left, &other.y_left)] {
            for (ra, rb) in a.iter().zip(b) {
                for (x, y) in ra.iter().zip(rb) {
                    gap = gap.max((x - y).abs());
                }
            }
        }
        Ok(gap)
    }

    /// Largest `Y¹ − Y²` (positive means `self` exceeds `other` somewhere).
    pub fn max_excess_over(&self, other: &Solution) -> Result<(f64, usize, usize)> {
        self.check_shape(other)?;
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, (ra, rb)) in self.y.iter().zip(&other.y).enumerate() {
            for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
                if x - y > best.0 {
                    best = (x - y, i, k);
                }
            }
        }
        Ok(best)
    }

    pub(crate) fn check_shape(&self, other: &Solution) -> Result<()> {
        if self.times.len() != other.times.len() || self.topology != other.topology {
            return Err(Error::GridMismatch {
                expected: self.times.len(),
                got: other.times.len(),
            });
        }
        Ok(())
    }

    /// Single-path copy along the given states (one per node).
    pub fn restrict(&self, states: &[usize]) -> Result<Solution> {
        let n = self.nodes();
        if states.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: states.len(),
            });
        }
        if states.iter().enumerate().any(|(i, &k)| k >= self.states(i)) {
            return Err(Error::InvalidInput("path state out of range".into()));
        }
        let pick = |f: &NodeField, len: usize| -> NodeField {
            (0..len).map(|i| vec![f[i][states[i]]]).collect()
        };
        Ok(Solution {
            topology: Topology::Paths(1),
            times: self.times.clone(),
            marks: self.marks.clone(),
            y: pick(&self.y, n),
            y_left: pick(&self.y_left, n),
            z: pick(&self.z, n - 1),
            kp_cont: pick(&self.kp_cont, n - 1),
            km_cont: pick(&self.km_cont, n - 1),
            kp_jump: pick(&self.kp_jump, n),
            km_jump: pick(&self.km_jump, n),
            lower: pick(&self.lower, n),
            lower_left: pick(&self.lower_left, n),
            upper: pick(&self.upper, n),
            upper_left: pick(&self.upper_left, n),
            jumps: JumpTrace {
                forcing: pick(&self.jumps.forcing, n),
                pre: pick(&self.jumps.pre, n),
            },
        })
    }

    /// `Y` along one path given its state at every node.
    pub fn y_path(&self, states: &[usize]) -> RcllPath {
        let right = states
            .iter()
            .enumerate()
            .map(|(i, &k)| self.y[i][k])
            .collect();
        let mut left: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| self.y_left[i][k])
            .collect();
        left[0] = self.y[0][states[0]];
        RcllPath::new(right, left).expect("consistent shapes")
    }

    fn k_path(&self, cont: &NodeField, jump: &NodeField, states: &[usize]) -> FiniteVariationPath {
        let c = (0..self.nodes() - 1).map(|i| cont[i][states[i]]).collect();
        let mut j: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| jump[i][k])
            .collect();
        j[0] = 0.0;
        FiniteVariationPath::new(c, j).expect("consistent shapes")
    }

    pub fn k_plus_path(&self, states: &[usize]) -> FiniteVariationPath {
        self.k_path(&self.kp_cont, &self.kp_jump, states)
    }

    pub fn k_minus_path(&self, states: &[usize]) -> FiniteVariationPath {
        self.k_path(&self.km_cont, &self.km_jump, states)
    }

    /// `(Y₋ − L₋)` along a path, with right values `Y − L`.
    pub fn lower_gap_path(&self, states: &[usize]) -> RcllPath {
        self.gap_path(states, true)
    }

    pub fn upper_gap_path(&self, states: &[usize]) -> RcllPath {
        self.gap_path(states, false)
    }

    fn gap_path(&self, states: &[usize], lower: bool) -> RcllPath {
        let pick = |y: f64, b: f64| if lower { y - b } else { b - y };
        let right: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let b = if lower {
                    self.lower[i][k]
                } else {
                    self.upper[i][k]
                };
                pick(self.y[i][k], b)
            })
            .collect();
        let mut left: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let b = if lower {
                    self.lower_left[i][k]
                } else {
                    self.upper_left[i][k]
                };
                pick(self.y_left[i][k], b)
            })
            .collect();
        left[0] = right[0];
        RcllPath::new(right, left).expect("consistent shapes")
    }

    /// Maximum over all paths of `Σ_i c[i][state_i]`, computed backward.
    pub(crate) fn path_max(&self, contrib: &NodeField) -> f64 {
        let n = contrib.len();
        let mut acc = contrib[n - 1].clone();
        for i in (0..n - 1).rev() {
            acc = (0..contrib[i].len())
                .map(|k| {
                    let best = (0..self.topology.child_count())
                        .map(|s| acc[self.topology.child(k, s)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    contrib[i][k] + best
                })
                .collect();
        }
        acc.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `E[K_{t_i} | state]` for the tree (the bridge-weighted average over
    /// the two parents) and the pathwise running sum for Monte Carlo.
    pub fn expected_cumulative(&self, plus: bool) -> NodeField {
        let (cont, jump) = if plus {
            (&self.kp_cont, &self.kp_jump)
        } else {
            (&self.km_cont, &self.km_jump)
        };
        let n = self.nodes();
        let mut out: NodeField = Vec::with_capacity(n);
        out.push(vec![0.0; self.states(0)]);
        for i in 1..n {
            let prev = &out[i - 1];
            let row: Vec<f64> = match self.topology {
                Topology::Tree => (0..=i)
                    .map(|k| {
                        // Parent k-1 moved up, parent k moved down.
                        let w_up = k as f64 / i as f64;
                        let mut v = 0.0;
                        if k >= 1 {
                            v += w_up * (prev[k - 1] + cont[i - 1][k - 1]);
                        }
                        if k < i {
                            v += (1.0 - w_up) * (prev[k] + cont[i - 1][k]);
                        }
                        v + jump[i][k]
                    })
                    .collect(),
                Topology::Paths(m) => (0..m)
                    .map(|p| prev[p] + cont[i - 1][p] + jump[i][p])
                    .collect(),
            };
            out.push(row);
        }
        out
    }
}
