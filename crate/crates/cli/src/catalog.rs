//! Built-in generator families and their parameter schemas.

use std::collections::BTreeMap;
use std::sync::Arc;

use grbsde_core::coefficients::{DriverFn, JumpFn, ReactionFn, StateFn};
use grbsde_core::{Barrier, FiniteVariationPath, NodeCtx, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Barrier,
    Driver,
    Jump,
    Process,
    Reaction,
    Terminal,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Barrier => "barrier",
            Slot::Driver => "driver",
            Slot::Jump => "jump",
            Slot::Process => "process",
            Slot::Reaction => "reaction",
            Slot::Terminal => "terminal",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: &'static str,
    /// `None` means required.
    pub default: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Family {
    pub slot: Slot,
    pub name: &'static str,
    pub formula: &'static str,
    pub params: Vec<ParamSpec>,
}

const fn req(name: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind: "number",
        default: None,
    }
}

const fn opt(name: &'static str, d: f64) -> ParamSpec {
    ParamSpec {
        name,
        kind: "number",
        default: Some(d),
    }
}

const fn list(name: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind: "array",
        default: None,
    }
}

/// All families, sorted by slot and name.
pub fn catalog() -> Vec<Family> {
    let f = |slot, name, formula, params| Family {
        slot,
        name,
        formula,
        params,
    };
    let mut out = vec![
        f(Slot::Barrier, "constant", "value", vec![req("value")]),
        f(
            Slot::Barrier,
            "brownian_shift",
            "clip(slope*B_t + shift, lo, hi)",
            vec![req("slope"), req("shift"), opt("lo", -1.0), opt("hi", 1.0)],
        ),
        f(
            Slot::Barrier,
            "pinch",
            "base everywhere except the left limit at t_star, which is value",
            vec![req("base"), req("t_star"), opt("value", 0.0)],
        ),
        f(
            Slot::Barrier,
            "tabulated",
            "right-continuous step function: values[j] on [times[j], times[j+1])",
            vec![list("times"), list("values")],
        ),
        f(Slot::Driver, "constant", "value", vec![req("value")]),
        f(
            Slot::Driver,
            "clipped_linear",
            "b + a*clip(y, -1, 1) + z_coef*clip(z, -1, 1)",
            vec![req("a"), req("b"), opt("z_coef", 0.0)],
        ),
        f(Slot::Driver, "quadratic_y", "-k*y^2", vec![req("k")]),
        f(
            Slot::Driver,
            "quadratic_z",
            "-C*|z|^2 - eta",
            vec![req("C"), opt("eta", 0.0)],
        ),
        f(Slot::Jump, "constant", "value", vec![req("value")]),
        f(
            Slot::Jump,
            "proportional",
            "a*x + b",
            vec![req("a"), req("b")],
        ),
        f(
            Slot::Process,
            "jumps",
            "rate*t plus jumps [[t, size], ...]",
            vec![opt("rate", 0.0), list("jumps")],
        ),
        f(Slot::Process, "linear", "rate*t", vec![req("rate")]),
        f(Slot::Reaction, "constant", "value", vec![req("value")]),
        f(
            Slot::Reaction,
            "clipped_linear",
            "b + a*clip(y, -1, 1)",
            vec![req("a"), req("b")],
        ),
        f(Slot::Terminal, "constant", "value", vec![req("value")]),
        f(
            Slot::Terminal,
            "brownian",
            "clip(scale*B_T, lo, hi)",
            vec![req("scale"), opt("lo", -1.0), opt("hi", 1.0)],
        ),
        f(
            Slot::Terminal,
            "brownian_min",
            "min(scale*B_T, level), floored at lo",
            vec![opt("scale", 1.0), req("level"), opt("lo", -1.0)],
        ),
    ];
    out.sort_by(|a, b| (a.slot, a.name).cmp(&(b.slot, b.name)));
    out
}

pub fn render_catalog() -> String {
    let mut s = String::new();
    for fam in catalog() {
        let params: Vec<String> = fam
            .params
            .iter()
            .map(|p| match (p.kind, p.default) {
                ("array", _) => format!("{}: array", p.name),
                (_, Some(d)) => format!("{}: number = {d}", p.name),
                (_, None) => format!("{}: number", p.name),
            })
            .collect();
        s.push_str(&format!(
            "{:<9} {:<15} [{}]  {}\n",
            fam.slot.name(),
            fam.name,
            params.join(", "),
            fam.formula
        ));
    }
    s
}

/// A family name plus parameters as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, toml::Value>,
}

impl GeneratorSpec {
    pub fn constant(v: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("value".into(), toml::Value::Float(v));
        Self {
            family: "constant".into(),
            params,
        }
    }
}

/// Parameters resolved against a family's schema.
struct Params<'a> {
    spec: &'a GeneratorSpec,
    fam: Family,
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(x) => Some(*x),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl<'a> Params<'a> {
    fn resolve(slot: Slot, spec: &'a GeneratorSpec) -> Result<Self, CliError> {
        let fam = catalog()
            .into_iter()
            .find(|f| f.slot == slot && f.name == spec.family)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "unknown {} family '{}' (see list-generators)",
                    slot.name(),
                    spec.family
                ))
            })?;
        for key in spec.params.keys() {
            if !fam.params.iter().any(|p| p.name == key) {
                return Err(CliError::Input(format!(
                    "{} family '{}' has no parameter '{key}'",
                    slot.name(),
                    fam.name
                )));
            }
        }
        for p in &fam.params {
            if p.default.is_none() && !spec.params.contains_key(p.name) {
                return Err(CliError::Input(format!(
                    "{} family '{}' needs parameter '{}'",
                    slot.name(),
                    fam.name,
                    p.name
                )));
            }
        }
        Ok(Self { spec, fam })
    }

    fn num(&self, name: &str) -> Result<f64, CliError> {
        let p = self
            .fam
            .params
            .iter()
            .find(|p| p.name == name)
            .expect("schema name");
        match self.spec.params.get(name) {
            Some(v) => as_f64(v).filter(|x| x.is_finite()).ok_or_else(|| {
                CliError::Input(format!("parameter '{name}' must be a finite number"))
            }),
            None => Ok(p.default.expect("required checked in resolve")),
        }
    }

    fn nums(&self, name: &str) -> Result<Vec<f64>, CliError> {
        match self.spec.params.get(name) {
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| {
                    as_f64(v).ok_or_else(|| CliError::Input(format!("'{name}' must hold numbers")))
                })
                .collect(),
            Some(_) => Err(CliError::Input(format!("'{name}' must be an array"))),
            None => Ok(Vec::new()),
        }
    }

    fn pairs(&self, name: &str) -> Result<Vec<(f64, f64)>, CliError> {
        match self.spec.params.get(name) {
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Array(p) if p.len() == 2 => match (as_f64(&p[0]), as_f64(&p[1])) {
                        (Some(x), Some(y)) => Ok((x, y)),
                        _ => Err(CliError::Input(format!(
                            "'{name}' entries must be [t, size]"
                        ))),
                    },
                    _ => Err(CliError::Input(format!(
                        "'{name}' entries must be [t, size]"
                    ))),
                })
                .collect(),
            Some(_) => Err(CliError::Input(format!("'{name}' must be an array"))),
            None => Ok(Vec::new()),
        }
    }
}

/// Bound data a family can certify: Lipschitz constant and `|value| ≤ a + c|z|²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Certificate {
    pub lipschitz: Option<f64>,
    pub bound: f64,
    pub quad: f64,
}

pub fn terminal(spec: &GeneratorSpec) -> Result<StateFn, CliError> {
    let p = Params::resolve(Slot::Terminal, spec)?;
    Ok(match p.fam.name {
        "constant" => {
            let v = p.num("value")?;
            Arc::new(move |_: &NodeCtx| v)
        }
        "brownian" => {
            let (s, lo, hi) = (p.num("scale")?, p.num("lo")?, p.num("hi")?);
            check_range(lo, hi)?;
            Arc::new(move |x: &NodeCtx| (s * x.b).clamp(lo, hi))
        }
        "brownian_min" => {
            let (s, level, lo) = (p.num("scale")?, p.num("level")?, p.num("lo")?);
            Arc::new(move |x: &NodeCtx| (s * x.b).min(level).max(lo))
        }
        _ => unreachable!(),
    })
}

fn check_range(lo: f64, hi: f64) -> Result<(), CliError> {
    if lo > hi {
        return Err(CliError::Input(format!(
            "clip range lo = {lo} exceeds hi = {hi}"
        )));
    }
    Ok(())
}

pub fn driver(spec: &GeneratorSpec) -> Result<(DriverFn, bool, Certificate), CliError> {
    let p = Params::resolve(Slot::Driver, spec)?;
    Ok(match p.fam.name {
        "constant" => {
            let v = p.num("value")?;
            let f: DriverFn = Arc::new(move |_, _, _| v);
            (
                f,
                false,
                Certificate {
                    lipschitz: Some(0.0),
                    bound: v.abs(),
                    quad: 0.0,
                },
            )
        }
        "clipped_linear" => {
            let (a, b, zc) = (p.num("a")?, p.num("b")?, p.num("z_coef")?);
            let f: DriverFn = Arc::new(move |_, y, z: &[f64]| {
                b + a * y.clamp(-1.0, 1.0) + zc * z[0].clamp(-1.0, 1.0)
            });
            let cert = Certificate {
                lipschitz: Some(a.abs().max(zc.abs())),
                bound: b.abs() + a.abs() + zc.abs(),
                quad: 0.0,
            };
            (f, zc != 0.0, cert)
        }
        "quadratic_y" => {
            let k = p.num("k")?;
            let f: DriverFn = Arc::new(move |_, y, _| -k * y * y);
            (
                f,
                false,
                Certificate {
                    lipschitz: None,
                    bound: 0.0,
                    quad: 0.0,
                },
            )
        }
        "quadratic_z" => {
            let (c, eta) = (p.num("C")?, p.num("eta")?);
            let f: DriverFn = Arc::new(move |_, _, z: &[f64]| -c * z[0] * z[0] - eta);
            (
                f,
                true,
                Certificate {
                    lipschitz: None,
                    bound: eta.abs(),
                    quad: c.abs(),
                },
            )
        }
        _ => unreachable!(),
    })
}

pub fn reaction(spec: &GeneratorSpec) -> Result<(ReactionFn, Certificate), CliError> {
    let p = Params::resolve(Slot::Reaction, spec)?;
    Ok(match p.fam.name {
        "constant" => {
            let v = p.num("value")?;
            let g: ReactionFn = Arc::new(move |_, _| v);
            (
                g,
                Certificate {
                    lipschitz: Some(0.0),
                    bound: v.abs(),
                    quad: 0.0,
                },
            )
        }
        "clipped_linear" => {
            let (a, b) = (p.num("a")?, p.num("b")?);
            let g: ReactionFn = Arc::new(move |_, y| b + a * y.clamp(-1.0, 1.0));
            (
                g,
                Certificate {
                    lipschitz: Some(a.abs()),
                    bound: a.abs() + b.abs(),
                    quad: 0.0,
                },
            )
        }
        _ => unreachable!(),
    })
}

pub fn jump(spec: &GeneratorSpec) -> Result<(JumpFn, Certificate), CliError> {
    let p = Params::resolve(Slot::Jump, spec)?;
    Ok(match p.fam.name {
        "constant" => {
            let v = p.num("value")?;
            let h: JumpFn = Arc::new(move |_, _, _| v);
            (
                h,
                Certificate {
                    lipschitz: Some(0.0),
                    bound: v.abs(),
                    quad: 0.0,
                },
            )
        }
        "proportional" => {
            let (a, b) = (p.num("a")?, p.num("b")?);
            let h: JumpFn = Arc::new(move |_, x, _| a * x + b);
            // Bound on the admissible box |x| ≤ 1.
            (
                h,
                Certificate {
                    lipschitz: Some(a.abs()),
                    bound: a.abs() + b.abs(),
                    quad: 0.0,
                },
            )
        }
        _ => unreachable!(),
    })
}

pub fn barrier(spec: &GeneratorSpec, grid: &TimeGrid) -> Result<Barrier, CliError> {
    let p = Params::resolve(Slot::Barrier, spec)?;
    Ok(match p.fam.name {
        "constant" => Barrier::constant(p.num("value")?),
        "brownian_shift" => {
            let (s, sh, lo, hi) = (p.num("slope")?, p.num("shift")?, p.num("lo")?, p.num("hi")?);
            check_range(lo, hi)?;
            Barrier::from_fn(move |x: &NodeCtx| (s * x.b + sh).clamp(lo, hi))
        }
        "pinch" => {
            let (base, t_star, value) = (p.num("base")?, p.num("t_star")?, p.num("value")?);
            let node = grid.index_of(t_star).ok_or_else(|| {
                CliError::Input(format!("pinch time {t_star} is not a grid node"))
            })?;
            Barrier::with_left(
                move |_| base,
                move |x: &NodeCtx| if x.step == node { value } else { base },
            )
        }
        "tabulated" => {
            let times = p.nums("times")?;
            let values = p.nums("values")?;
            if times.is_empty() || times.len() != values.len() {
                return Err(CliError::Input(
                    "tabulated barrier needs equally long, nonempty times and values".into(),
                ));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) || times[0] > 0.0 {
                return Err(CliError::Input(
                    "tabulated times must increase and start at or before 0".into(),
                ));
            }
            let (t2, v2) = (times.clone(), values.clone());
            let right = move |x: &NodeCtx| {
                let j = times.partition_point(|&s| s <= x.t + 1e-12);
                values[j.saturating_sub(1)]
            };
            let left = move |x: &NodeCtx| {
                let j = t2.partition_point(|&s| s < x.t - 1e-12);
                v2[j.saturating_sub(1)]
            };
            Barrier::with_left(right, left)
        }
        _ => unreachable!(),
    })
}

pub fn process(spec: &GeneratorSpec, grid: &TimeGrid) -> Result<FiniteVariationPath, CliError> {
    let p = Params::resolve(Slot::Process, spec)?;
    match p.fam.name {
        "linear" => Ok(FiniteVariationPath::linear(grid, p.num("rate")?)),
        "jumps" => {
            let mut path = FiniteVariationPath::linear(grid, p.num("rate")?);
            for (t, size) in p.pairs("jumps")? {
                let i = grid.index_of(t).ok_or_else(|| {
                    CliError::Input(format!("process jump at t = {t} is not a grid node"))
                })?;
                if i == 0 {
                    return Err(CliError::Input("process jumps must be after t = 0".into()));
                }
                path.jumps_mut()[i] += size;
            }
            Ok(path)
        }
        _ => unreachable!(),
    }
}
