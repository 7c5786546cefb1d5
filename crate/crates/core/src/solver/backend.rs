//! Conditional expectations over one time step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::{BrownianEnsemble, EnsembleMode, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Tree,
    /// Least-squares Monte Carlo with a polynomial basis in `B_t/√t`.
    Lsmc {
        degree: usize,
        paths: usize,
    },
}

impl BackendSpec {
    pub const DEFAULT_DEGREE: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if let BackendSpec::Lsmc { degree, paths } = *self {
            let need = (degree + 1) * 10;
            if paths < need {
                return Err(Error::InvalidInput(format!(
                    "LSMC with degree {degree} needs at least {need} paths, got {paths}"
                )));
            }
        }
        Ok(())
    }

    pub fn ensemble_mode(&self) -> EnsembleMode {
        match *self {
            BackendSpec::Tree => EnsembleMode::Tree,
            BackendSpec::Lsmc { paths, .. } => EnsembleMode::MonteCarlo { paths },
        }
    }
}

struct Fit {
    design: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

enum Kind {
    Tree { sqrt_dt: f64 },
    Lsmc { fits: Vec<Fit> },
}

pub struct Backend<'a> {
    ens: &'a BrownianEnsemble,
    spec: BackendSpec,
    kind: Kind,
}

/// Per-state work is split across threads only above this size.
const PAR_THRESHOLD: usize = 2048;

fn map_states(count: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if count >= PAR_THRESHOLD {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

impl<'a> Backend<'a> {
    pub fn new(spec: BackendSpec, ens: &'a BrownianEnsemble) -> Result<Self> {
        spec.validate()?;
        let grid = ens.grid();
        let kind = match (spec, ens.topology()) {
            (BackendSpec::Tree, Topology::Tree) => Kind::Tree {
                sqrt_dt: grid.dt(0).sqrt(),
            },
            (BackendSpec::Lsmc { degree, paths }, Topology::Paths(m)) if m == paths => {
                let mut fits = Vec::with_capacity(grid.steps());
                for step in 0..grid.steps() {
                    // All paths share B_0 = 0, so only a constant fits at t = 0.
                    let deg = if step == 0 { 0 } else { degree };
                    let scale = if step == 0 { 1.0 } else { grid.t(step).sqrt() };
                    let b = ens.b_slice(step);
                    let design = DMatrix::from_fn(m, deg + 1, |p, j| (b[p] / scale).powi(j as i32));
                    let gram = design.tr_mul(&design);
                    let chol = Cholesky::new(gram).ok_or(Error::RankDeficient { step })?;
                    let diag = chol.l_dirty().diagonal();
                    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| {
                        (a.min(d.abs()), b.max(d.abs()))
                    });
                    if lo <= 1e-10 * hi {
                        return Err(Error::RankDeficient { step });
                    }
                    fits.push(Fit { design, chol });
                }
                Kind::Lsmc { fits }
            }
            _ => {
                return Err(Error::InvalidInput(
                    "backend kind does not match the Brownian ensemble".into(),
                ))
            }
        };
        Ok(Self { ens, spec, kind })
    }

    pub fn spec(&self) -> BackendSpec {
        self.spec
    }

    pub fn ensemble(&self) -> &BrownianEnsemble {
        self.ens
    }

    pub fn topology(&self) -> Topology {
        self.ens.topology()
    }

    pub fn states(&self, step: usize) -> usize {
        self.ens.states(step)
    }

    fn regress(&self, step: usize, values: &[f64]) -> Vec<f64> {
        let Kind::Lsmc { fits } = &self.kind else {
            unreachable!("regression only on Monte Carlo paths")
        };
        let fit = &fits[step];
        let v = DVector::from_column_slice(values);
        let rhs = fit.design.tr_mul(&v);
        let coef = fit.chol.solve(&rhs);
        let fitted = &fit.design * coef;
        fitted.as_slice().to_vec()
    }

    /// `E[v(child) | state]` for every state at `step`, where `v` takes the
    /// parent state and the child state.
    pub fn expect_pairs(
        &self,
        step: usize,
        v: impl Fn(usize, usize) -> f64 + Sync + Send,
    ) -> Vec<f64> {
        let count = self.states(step);
        match &self.kind {
            Kind::Tree { .. } => map_states(count, |k| 0.5 * (v(k, k) + v(k, k + 1))),
            Kind::Lsmc { .. } => {
                let raw = map_states(count, |p| v(p, p));
                self.regress(step, &raw)
            }
        }
    }

    /// `E[Y_{i+1} | F_i]` from the values at `step + 1`.
    pub fn expect(&self, step: usize, next: &[f64]) -> Vec<f64> {
        self.expect_pairs(step, |_, c| next[c])
    }

    /// `E[Y_{i+1} ΔB_i | F_i] / Δt_i`.
    pub fn expect_z(&self, step: usize, next: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Tree { sqrt_dt } => {
                let s = *sqrt_dt;
                map_states(self.states(step), |k| (next[k + 1] - next[k]) / (2.0 * s))
            }
            Kind::Lsmc { .. } => {
                let db = self.ens.increments(step);
                let dt = self.ens.grid().dt(step);
                let raw = map_states(self.states(step), |p| next[p] * db[p] / dt);
                self.regress(step, &raw)
            }
        }
    }
}
