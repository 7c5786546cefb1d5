//! Scenario execution and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use grbsde_core::approx::ladder_level;
use grbsde_core::comparison::{check_comparison, ComparisonReport};
use grbsde_core::{
    dynkin_value_bruteforce, simulate_ensemble, solve_concatenated, solve_general,
    solve_lipschitz_picard, solve_zero_generator, Backend, BackendSpec, BrownianEnsemble,
    CoefficientSet, ComparisonCase, HistoryRow, Solution, SolveReport, Topology,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checks::{self, JumpAudit, SkorokhodCheck, TransformCheck};
use crate::error::CliError;
use crate::scenario::{Harness, RegimeSel, Scenario};

pub const OUT_DIR_ENV: &str = "GRBSDE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";
/// Sampled `(s, y, z)` points per path in the transform check.
const TRANSFORM_SAMPLES: usize = 20_000;
pub const DYNKIN_TOL: f64 = 1e-12;
/// Largest violation fraction tolerated by a Monte Carlo comparison.
pub const MC_VIOLATION_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub raw: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub report: ComparisonReport,
    pub hypotheses_passed: bool,
    pub y0: (f64, f64),
    pub skorokhod: (SkorokhodCheck, SkorokhodCheck),
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DynkinResult {
    pub game_value: f64,
    pub solver_y0: f64,
    pub error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderStudy {
    pub levels: Vec<HistoryRow>,
    pub gaps_nonincreasing: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct HarnessResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform_check: Option<TransformCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynkin_oracle: Option<DynkinResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_study: Option<LadderStudy>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub report: SolveSummary,
    pub skorokhod: SkorokhodCheck,
    pub jumps: JumpAudit,
    pub harnesses: HarnessResults,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub regime: grbsde_core::Regime,
    pub backend: BackendSpec,
    pub stepping: grbsde_core::Stepping,
    pub converged: bool,
    pub y0: f64,
    pub history: Vec<HistoryRow>,
    pub counters: grbsde_core::solver::SolveCounters,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub core_version: &'static str,
    pub cli_version: &'static str,
    pub config_sha256: String,
    pub grid_nodes: usize,
    pub backend: BackendSpec,
    /// States written per node (tree: `i + 1`; Monte Carlo: the capped path count).
    pub states_per_node: Vec<usize>,
    pub solution_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_rows: Option<usize>,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub solution_csv: String,
    pub diagnostics: Diagnostics,
    pub ladder_csv: Option<String>,
    pub manifest: Manifest,
}

impl Artifacts {
    pub fn exit_code(&self) -> i32 {
        if self.diagnostics.violations.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("solution.csv"), &self.solution_csv)?;
        fs::write(dir.join("diagnostics.json"), to_json(&self.diagnostics))?;
        fs::write(dir.join("manifest.json"), to_json(&self.manifest))?;
        if let Some(l) = &self.ladder_csv {
            fs::write(dir.join("ladder.csv"), l)?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Solution table: one row per node and written state.
pub fn solution_csv(sol: &Solution, max_paths: usize) -> (String, Vec<usize>) {
    let n = sol.nodes();
    let kp = sol.expected_cumulative(true);
    let km = sol.expected_cumulative(false);
    let mut s = String::from("t,node,state,Y,Z,Kplus_cum,Kminus_cum,left_Y_at_marks\n");
    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        let states = match sol.topology {
            Topology::Tree => sol.states(i),
            Topology::Paths(m) => m.min(max_paths),
        };
        counts.push(states);
        let mark = sol.marks.contains(&i);
        for k in 0..states {
            let z = if i + 1 < n {
                fmt_num(sol.z[i][k])
            } else {
                String::new()
            };
            let left = if mark {
                fmt_num(sol.y_left[i][k])
            } else {
                String::new()
            };
            writeln!(
                s,
                "{},{i},{k},{},{z},{},{},{left}",
                fmt_num(sol.times[i]),
                fmt_num(sol.y[i][k]),
                fmt_num(kp[i][k]),
                fmt_num(km[i][k]),
            )
            .expect("string write");
        }
    }
    (s, counts)
}

pub fn ladder_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("n,sup_gap,monotone\n");
    for r in rows {
        let flag = match r.monotone {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        writeln!(s, "{},{},{flag}", r.n, fmt_num(r.sup_gap)).expect("string write");
    }
    s
}

fn check_combinations(s: &Scenario, c: &CoefficientSet, spec: BackendSpec) -> Result<(), CliError> {
    let bad = |m: &str| Err(CliError::Input(m.to_string()));
    match s.regime {
        RegimeSel::Zero if !c.is_zero_generator() => {
            return bad("the zero regime needs f = g = h = 0");
        }
        RegimeSel::Picard if c.jump().is_some() => {
            return bad("the picard regime needs h = 0");
        }
        RegimeSel::Picard | RegimeSel::Concatenated if c.lipschitz().is_none() => {
            return bad("this regime needs a Lipschitz constant; set coefficients.lipschitz");
        }
        _ => {}
    }
    if s.has(Harness::DynkinOracle) {
        if spec != BackendSpec::Tree || !c.is_zero_generator() {
            return bad("dynkin-oracle needs the tree backend and zero generators");
        }
        if s.grid.steps > grbsde_core::solver::MAX_DYNKIN_DEPTH {
            return bad("dynkin-oracle is limited to 6 steps");
        }
    }
    if s.has(Harness::TransformCheck) && c.semimartingale.is_none() {
        return bad("transform-check needs coefficients.semimartingale");
    }
    if s.has(Harness::Comparison) != s.comparison.is_some() {
        return bad("the comparison harness and the [comparison] section go together");
    }
    Ok(())
}

fn solve(s: &Scenario, c: &CoefficientSet, backend: &Backend) -> Result<SolveReport, CliError> {
    let stepping = s.solver.stepping()?;
    Ok(match s.regime {
        RegimeSel::Zero => solve_zero_generator(c, backend)?,
        RegimeSel::Picard => {
            solve_lipschitz_picard(c, backend, s.solver.max_iter, s.solver.tol, stepping)?
        }
        RegimeSel::Concatenated => solve_concatenated(c, backend, stepping)?,
        RegimeSel::General => solve_general(c, backend, s.solver.levels, s.solver.tol, stepping)?,
    })
}

/// Coefficients actually used for the reported solution.
pub fn effective_set(c: &CoefficientSet, rep: &SolveReport) -> Result<CoefficientSet, CliError> {
    match (rep.regime, rep.history.last()) {
        (grbsde_core::Regime::General, Some(last)) => {
            Ok(ladder_level(c, last.n)?.coefficients().clone())
        }
        _ => Ok(c.clone()),
    }
}

fn ladder_study(
    s: &Scenario,
    c: &CoefficientSet,
    backend: &Backend,
    rep: &SolveReport,
) -> Result<LadderStudy, CliError> {
    let history = if rep.regime == grbsde_core::Regime::General {
        rep.history.clone()
    } else {
        let stepping = s.solver.stepping()?;
        solve_general(c, backend, s.solver.levels, s.solver.tol, stepping)?.history
    };
    // Level 0 has no predecessor and carries no gap.
    let gaps: Vec<f64> = history.iter().skip(1).map(|r| r.sup_gap).collect();
    let gaps_nonincreasing = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let converged = history.last().is_some_and(|r| r.sup_gap <= s.solver.tol);
    Ok(LadderStudy {
        levels: history,
        gaps_nonincreasing,
        converged,
    })
}

/// Runs a parsed scenario and returns its artifacts. Input problems are
/// errors; failed checks are listed in `diagnostics.violations`.
pub fn execute(s: &Scenario) -> Result<Artifacts, CliError> {
    let grid = s.grid()?;
    let spec = s.backend.spec()?;
    let ens: BrownianEnsemble = simulate_ensemble(&grid, spec.ensemble_mode(), s.seed)?;
    let c = s.coefficients.build(&grid)?;
    c.validate(&ens)?;
    if !s.raw {
        c.check_admissible_box(&ens)?;
    }
    check_combinations(s, &c, spec)?;
    let backend = Backend::new(spec, &ens)?;
    let rep = solve(s, &c, &backend)?;

    let mut violations = Vec::new();
    let dt = checks::max_dt(&rep.solution);
    let skorokhod = checks::skorokhod_check(rep.diagnostics, dt);
    if !skorokhod.passed {
        violations.push("skorokhod".to_string());
    }
    if rep.regime == grbsde_core::Regime::Picard && !rep.converged {
        violations.push("picard did not converge".to_string());
    }
    let used = effective_set(&c, &rep)?;
    let jumps = checks::audit_jumps(&used, &ens, &rep.solution);
    if !jumps.passed {
        violations.push("jump identities".to_string());
    }

    let mut harnesses = HarnessResults::default();
    let mut ladder_rows = None;
    let mut ladder_out = None;
    if s.has(Harness::TransformCheck) {
        let t = checks::transform_check(&c, &ens, &rep.solution, TRANSFORM_SAMPLES, s.seed)?;
        if !t.passed {
            violations.push("transform-check".to_string());
        }
        harnesses.transform_check = Some(t);
    }
    if let Some(cmp) = &s.comparison {
        let c2 = s
            .coefficients
            .overridden_by(&cmp.coefficients)
            .build(&grid)?;
        c2.validate(&ens)?;
        if !s.raw {
            c2.check_admissible_box(&ens)?;
        }
        let case = ComparisonCase::new(c.clone(), c2, cmp.bundle.into())?;
        let (report, r1, r2) = check_comparison(&case, &backend, &s.solver.comparison_options()?)?;
        let sk = (
            checks::skorokhod_check(r1.diagnostics, dt),
            checks::skorokhod_check(r2.diagnostics, dt),
        );
        let hypotheses_passed = report.hypotheses.passed();
        let conclusions = match spec {
            BackendSpec::Tree => report.passed(),
            BackendSpec::Lsmc { .. } => report.violation_fraction < MC_VIOLATION_FRACTION,
        };
        if !hypotheses_passed {
            violations.push(format!(
                "comparison hypotheses: {}",
                report.hypotheses.failures().join(", ")
            ));
        }
        if !conclusions {
            violations.push("comparison conclusions".to_string());
        }
        if !(sk.0.passed && sk.1.passed) {
            violations.push("skorokhod (comparison solves)".to_string());
        }
        harnesses.comparison = Some(ComparisonResult {
            passed: hypotheses_passed && conclusions,
            hypotheses_passed,
            y0: (r1.solution.y0(), r2.solution.y0()),
            skorokhod: sk,
            report,
        });
    }
    if s.has(Harness::DynkinOracle) {
        let game_value = dynkin_value_bruteforce(&c, &ens)?;
        let solver_y0 = rep.solution.y0();
        let error = (game_value - solver_y0).abs();
        let passed = error <= DYNKIN_TOL;
        if !passed {
            violations.push("dynkin-oracle".to_string());
        }
        harnesses.dynkin_oracle = Some(DynkinResult {
            game_value,
            solver_y0,
            error,
            passed,
        });
    }
    if s.has(Harness::LadderStudy) {
        let l = ladder_study(s, &c, &backend, &rep)?;
        let strict = spec == BackendSpec::Tree;
        if strict && (!l.gaps_nonincreasing || l.levels.iter().any(|r| r.monotone == Some(false))) {
            violations.push("ladder monotonicity".to_string());
        }
        ladder_rows = Some(l.levels.len());
        ladder_out = Some(ladder_csv(&l.levels));
        harnesses.ladder_study = Some(l);
    }

    let (solution_csv, states_per_node) = solution_csv(&rep.solution, s.output.max_paths);
    let manifest = Manifest {
        name: s.name.clone(),
        seed: s.seed,
        core_version: grbsde_core::VERSION,
        cli_version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex::encode(Sha256::digest(s.canonical().as_bytes())),
        grid_nodes: grid.len(),
        backend: spec,
        solution_rows: states_per_node.iter().sum(),
        states_per_node,
        ladder_rows,
    };
    let diagnostics = Diagnostics {
        report: SolveSummary {
            regime: rep.regime,
            backend: rep.backend,
            stepping: rep.stepping,
            converged: rep.converged,
            y0: rep.solution.y0(),
            history: rep.history.clone(),
            counters: rep.counters,
        },
        skorokhod,
        jumps,
        harnesses,
        violations,
    };
    Ok(Artifacts {
        solution_csv,
        diagnostics,
        ladder_csv: ladder_out,
        manifest,
    })
}

/// Output directory: flag, then environment, then scenario, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, scenario: &Scenario) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    scenario
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn load(opts: &RunOptions) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(&opts.scenario)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", opts.scenario.display())))?;
    let mut s = Scenario::parse(&text)?;
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    s.raw |= opts.raw;
    Ok(s)
}

pub fn run(opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let s = load(opts)?;
    let artifacts = match opts.threads {
        Some(0) => return Err(CliError::Input("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?
            .install(|| execute(&s))?,
        None => execute(&s)?,
    };
    let out_dir = resolve_out_dir(opts.out.as_deref(), &s);
    artifacts.write(&out_dir)?;
    Ok(RunOutcome {
        exit_code: artifacts.exit_code(),
        out_dir,
        violations: artifacts.diagnostics.violations.clone(),
    })
}
