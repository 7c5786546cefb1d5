//! Brownian motion on the grid: a recombining binomial tree or a bundle of
//! Monte Carlo paths. Every path draws from its own ChaCha stream keyed by
//! the path index, so the bundle does not depend on how work is split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleMode {
    Tree,
    MonteCarlo { paths: usize },
}

/// Node structure of the discrete filtration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Topology {
    /// State `k` at step `i` has `k` up-moves; children are `k` and `k + 1`.
    Tree,
    /// One state per path at every step; the child of `p` is `p`.
    Paths(usize),
}

impl Topology {
    pub fn states(&self, step: usize) -> usize {
        match *self {
            Topology::Tree => step + 1,
            Topology::Paths(m) => m,
        }
    }

    /// Index of the `slot`-th child at the next step.
    pub fn child(&self, state: usize, slot: usize) -> usize {
        match *self {
            Topology::Tree => state + slot,
            Topology::Paths(_) => state,
        }
    }

    pub fn child_count(&self) -> usize {
        match *self {
            Topology::Tree => 2,
            Topology::Paths(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrownianEnsemble {
    grid: TimeGrid,
    topology: Topology,
    seed: u64,
    sqrt_dt: f64,
    /// Monte Carlo only: `b[node][path]`.
    b: Vec<Vec<f64>>,
    /// Monte Carlo only: `db[step][path]`.
    db: Vec<Vec<f64>>,
}

pub fn simulate_ensemble(
    grid: &TimeGrid,
    mode: EnsembleMode,
    seed: u64,
) -> Result<BrownianEnsemble> {
    match mode {
        EnsembleMode::Tree => {
            if !grid.is_uniform() {
                return Err(Error::Unsupported(
                    "the binomial tree needs a uniform grid; use Monte Carlo for inserted jump nodes"
                        .into(),
                ));
            }
            Ok(BrownianEnsemble {
                grid: grid.clone(),
                topology: Topology::Tree,
                seed,
                sqrt_dt: grid.dt(0).sqrt(),
                b: Vec::new(),
                db: Vec::new(),
            })
        }
        EnsembleMode::MonteCarlo { paths } => {
            if paths == 0 {
                return Err(Error::InvalidInput("path count must be at least 1".into()));
            }
            let steps = grid.steps();
            let sd: Vec<f64> = (0..steps).map(|i| grid.dt(i).sqrt()).collect();
            let per_path: Vec<Vec<f64>> = (0..paths)
                .into_par_iter()
                .map(|p| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(p as u64);
                    sd.iter()
                        .map(|s| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            s * z
                        })
                        .collect()
                })
                .collect();
            let mut db = vec![vec![0.0; paths]; steps];
            let mut b = vec![vec![0.0; paths]; steps + 1];
            for (p, incs) in per_path.iter().enumerate() {
                let mut acc = 0.0;
                for (i, &d) in incs.iter().enumerate() {
                    db[i][p] = d;
                    acc += d;
                    b[i + 1][p] = acc;
                }
            }
            Ok(BrownianEnsemble {
                grid: grid.clone(),
                topology: Topology::Paths(paths),
                seed,
                sqrt_dt: f64::NAN,
                b,
                db,
            })
        }
    }
}

impl BrownianEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_tree(&self) -> bool {
        matches!(self.topology, Topology::Tree)
    }

    pub fn states(&self, step: usize) -> usize {
        self.topology.states(step)
    }

    pub fn b(&self, step: usize, state: usize) -> f64 {
        match self.topology {
            Topology::Tree => (2.0 * state as f64 - step as f64) * self.sqrt_dt,
            Topology::Paths(_) => self.b[step][state],
        }
    }

    /// `B` at every state of `step`.
    pub fn b_slice(&self, step: usize) -> Vec<f64> {
        match self.topology {
            Topology::Tree => (0..=step).map(|k| self.b(step, k)).collect(),
            Topology::Paths(_) => self.b[step].clone(),
        }
    }

    /// Increment over interval `step` when moving from `state` to its
    /// `slot`-th child.
    pub fn increment(&self, step: usize, state: usize, slot: usize) -> f64 {
        match self.topology {
            Topology::Tree => {
                if slot == 1 {
                    self.sqrt_dt
                } else {
                    -self.sqrt_dt
                }
            }
            Topology::Paths(_) => self.db[step][state],
        }
    }

    /// Monte Carlo increments of interval `step` (empty for the tree).
    pub fn increments(&self, step: usize) -> &[f64] {
        match self.topology {
            Topology::Tree => &[],
            Topology::Paths(_) => &self.db[step],
        }
    }

    /// Probability of each child slot.
    pub fn child_weight(&self) -> f64 {
        match self.topology {
            Topology::Tree => 0.5,
            Topology::Paths(_) => 1.0,
        }
    }

    /// One Brownian path: the given tree states, or path `index` of the bundle.
    pub fn path_values(&self, index: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.b(i, index)).collect()
    }
}
