//! Scenario files and their translation into solver inputs.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use grbsde_core::coefficients::constant_fn;
use grbsde_core::comparison::ComparisonOptions;
use grbsde_core::{
    build_grid, BackendSpec, CoefficientSet, FiniteVariationPath, HypothesisBundle, NodeCtx,
    SemimartingaleWitness, Stepping, TimeGrid, Witnesses,
};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Certificate, GeneratorSpec};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeSel {
    Zero,
    Picard,
    Concatenated,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Harness {
    TransformCheck,
    Comparison,
    DynkinOracle,
    LadderStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub jump_marks: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Tree,
    Lsmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    pub degree: Option<usize>,
    pub paths: Option<usize>,
}

impl BackendSection {
    pub const DEFAULT_PATHS: usize = 10_000;

    pub fn spec(&self) -> Result<BackendSpec, CliError> {
        let spec = match self.kind {
            BackendKind::Tree => {
                if self.degree.is_some() || self.paths.is_some() {
                    return Err(CliError::Input(
                        "the tree backend takes no degree or paths".into(),
                    ));
                }
                BackendSpec::Tree
            }
            BackendKind::Lsmc => BackendSpec::Lsmc {
                degree: self.degree.unwrap_or(BackendSpec::DEFAULT_DEGREE),
                paths: self.paths.unwrap_or(Self::DEFAULT_PATHS),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SteppingKind {
    #[default]
    Explicit,
    Implicit,
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub stepping: SteppingKind,
    pub sweeps: Option<usize>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_max_iter() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-12
}
fn default_levels() -> usize {
    6
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            stepping: SteppingKind::Explicit,
            sweeps: None,
            max_iter: default_max_iter(),
            tol: default_tol(),
            levels: default_levels(),
        }
    }
}

impl SolverSection {
    pub fn stepping(&self) -> Result<Stepping, CliError> {
        Ok(match (self.stepping, self.sweeps) {
            (SteppingKind::Explicit, None) => Stepping::Explicit,
            (SteppingKind::Implicit, s) => Stepping::Implicit {
                sweeps: s.unwrap_or(Stepping::IMPLICIT_SWEEPS),
            },
            (SteppingKind::Converged, None) => Stepping::converged(),
            (_, Some(_)) => {
                return Err(CliError::Input(
                    "'sweeps' applies to implicit stepping only".into(),
                ))
            }
        })
    }

    pub fn comparison_options(&self) -> Result<ComparisonOptions, CliError> {
        Ok(ComparisonOptions {
            stepping: self.stepping()?,
            ladder_levels: self.levels,
            ladder_tol: self.tol,
            ..ComparisonOptions::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WitnessSection {
    pub eta: Option<f64>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemimartingaleSection {
    #[serde(default)]
    pub s0: f64,
    #[serde(default)]
    pub v_rate: f64,
    #[serde(default)]
    pub gamma: f64,
}

/// Every field is optional so that a comparison set can override a few.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub terminal: Option<GeneratorSpec>,
    pub driver: Option<GeneratorSpec>,
    pub reaction: Option<GeneratorSpec>,
    pub jump: Option<GeneratorSpec>,
    pub lower: Option<GeneratorSpec>,
    pub upper: Option<GeneratorSpec>,
    pub a: Option<GeneratorSpec>,
    pub r: Option<GeneratorSpec>,
    pub lipschitz: Option<f64>,
    pub witnesses: Option<WitnessSection>,
    pub semimartingale: Option<SemimartingaleSection>,
}

impl CoefficientSection {
    /// `self` with the fields present in `o` replaced.
    pub fn overridden_by(&self, o: &CoefficientSection) -> CoefficientSection {
        fn pick<T: Clone>(a: &Option<T>, b: &Option<T>) -> Option<T> {
            b.clone().or_else(|| a.clone())
        }
        CoefficientSection {
            terminal: pick(&self.terminal, &o.terminal),
            driver: pick(&self.driver, &o.driver),
            reaction: pick(&self.reaction, &o.reaction),
            jump: pick(&self.jump, &o.jump),
            lower: pick(&self.lower, &o.lower),
            upper: pick(&self.upper, &o.upper),
            a: pick(&self.a, &o.a),
            r: pick(&self.r, &o.r),
            lipschitz: pick(&self.lipschitz, &o.lipschitz),
            witnesses: pick(&self.witnesses, &o.witnesses),
            semimartingale: pick(&self.semimartingale, &o.semimartingale),
        }
    }

    /// Builds the coefficient set. Missing barriers default to `∓1`.
    pub fn build(&self, grid: &TimeGrid) -> Result<CoefficientSet, CliError> {
        let mut c = CoefficientSet::new(grid);
        let zero = Certificate {
            lipschitz: Some(0.0),
            ..Certificate::default()
        };
        if let Some(t) = &self.terminal {
            let xi = catalog::terminal(t)?;
            c = c.with_terminal(move |x: &NodeCtx| xi(x));
        }
        let mut f_cert = zero;
        if let Some(d) = &self.driver {
            let (f, uses_z, cert) = catalog::driver(d)?;
            c = c.with_driver_arc(Some(f), uses_z);
            f_cert = cert;
        }
        let mut g_cert = zero;
        if let Some(g) = &self.reaction {
            let (g, cert) = catalog::reaction(g)?;
            c = c.with_reaction_arc(Some(g));
            g_cert = cert;
        }
        let mut h_cert = zero;
        if let Some(h) = &self.jump {
            let (h, cert) = catalog::jump(h)?;
            c = c.with_jump_arc(Some(h));
            h_cert = cert;
        }
        let lower = match &self.lower {
            Some(s) => catalog::barrier(s, grid)?,
            None => catalog::barrier(&GeneratorSpec::constant(-1.0), grid)?,
        };
        let upper = match &self.upper {
            Some(s) => catalog::barrier(s, grid)?,
            None => catalog::barrier(&GeneratorSpec::constant(1.0), grid)?,
        };
        c = c.with_barriers(lower, upper);
        if let Some(a) = &self.a {
            c = c.with_a(catalog::process(a, grid)?)?;
        }
        if let Some(r) = &self.r {
            c = c.with_r(catalog::process(r, grid)?)?;
        }

        let derived = match (f_cert.lipschitz, g_cert.lipschitz) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        c = c.with_lipschitz(self.lipschitz.or(derived));

        let w = self.witnesses.unwrap_or_default();
        let marks: BTreeSet<usize> = grid.marks().iter().copied().collect();
        let l = w.l.unwrap_or(h_cert.bound);
        for (name, v) in [("eta", w.eta), ("c", w.c), ("beta", w.beta), ("l", w.l)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(CliError::Input(format!(
                        "witness {name} must be finite and nonnegative"
                    )));
                }
            }
        }
        c = c.with_witnesses(Witnesses {
            eta: constant_fn(w.eta.unwrap_or(f_cert.bound)),
            c: constant_fn(w.c.unwrap_or(f_cert.quad)),
            beta: constant_fn(w.beta.unwrap_or(g_cert.bound)),
            l: Arc::new(move |x: &NodeCtx| if marks.contains(&x.step) { l } else { 0.0 }),
        });
        if let Some(s) = self.semimartingale {
            c = c.with_semimartingale(SemimartingaleWitness {
                s0: s.s0,
                v: FiniteVariationPath::linear(grid, s.v_rate),
                gamma: constant_fn(s.gamma),
            })?;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BundleSel {
    #[default]
    Appendix,
    Maximal,
}

impl From<BundleSel> for HypothesisBundle {
    fn from(b: BundleSel) -> Self {
        match b {
            BundleSel::Appendix => HypothesisBundle::Appendix,
            BundleSel::Maximal => HypothesisBundle::Maximal,
        }
    }
}

/// Second coefficient set, given as overrides of the main one. The main
/// set plays the role of the smaller solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSection {
    #[serde(default)]
    pub bundle: BundleSel,
    #[serde(default)]
    pub coefficients: CoefficientSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Monte Carlo paths written to the solution table.
    #[serde(default = "default_max_paths")]
    pub max_paths: usize,
}

fn default_max_paths() -> usize {
    64
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            max_paths: default_max_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub regime: RegimeSel,
    #[serde(default)]
    pub harnesses: Vec<Harness>,
    /// Accept barriers outside the unit box.
    #[serde(default)]
    pub raw: bool,
    /// Not part of the configuration hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub grid: GridSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    pub comparison: Option<ComparisonSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s: Scenario =
            toml::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))?;
        s.harnesses.sort();
        s.harnesses.dedup();
        Ok(s)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(build_grid(
            self.grid.horizon,
            self.grid.steps,
            &self.grid.jump_marks,
        )?)
    }

    pub fn has(&self, h: Harness) -> bool {
        self.harnesses.contains(&h)
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }
}
