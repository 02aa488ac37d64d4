//! Run configuration: a strict TOML document with five sections.
//!
//! ```toml
//! [model]
//! family = "spin_3half"
//! omega = 1.0
//!
//! [kernel]
//! gamma_rate = 1.0
//! gamma = 0.3
//!
//! [grid]
//! t_max = 5.0
//! n_steps = 500
//!
//! [run]
//! mode = "nonlinear"
//! trajectories = 1000
//! seed = 7
//! order = 1
//! initial_state = "uniform"
//!
//! [output]
//! path = "out/fig2"
//! observables = ["coherence_14", "rho_11", "entropy"]
//! ```
//!
//! Every problem found is collected, so an empty document reports all
//! missing keys at once. Unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};

use nmqsd::ensemble::LogBase;
use nmqsd::linalg::{StateVector, C64};
use nmqsd::models::{
    build_band_model, build_driven_four_level, build_multi_transition, build_spin_general, build_spin_model,
    build_three_level, DriveTerm, ModelFamily, ModelSpec,
};
use nmqsd::noise::{CorrelationKernel, TabulatedKernel, TimeGrid};
use nmqsd::propagator::Mode;
use toml::{Table, Value};

/// Significant digits written by default; enough to round-trip any f64.
pub const ROUND_TRIP_DIGITS: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Missing,
    Unknown,
    Type(&'static str),
    Constraint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub problem: Problem,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.problem {
            Problem::Missing => write!(f, "missing key `{}`", self.key),
            Problem::Unknown => write!(f, "unknown key `{}`", self.key),
            Problem::Type(expected) => write!(f, "`{}`: expected {expected}", self.key),
            Problem::Constraint(msg) => write!(f, "`{}`: {msg}", self.key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl ConfigError {
    pub fn missing_keys(&self) -> Vec<&str> {
        self.issues
            .iter()
            .filter(|i| i.problem == Problem::Missing)
            .map(|i| i.key.as_str())
            .collect()
    }

    pub fn mentions(&self, key: &str) -> bool {
        self.issues.iter().any(|i| i.key == key)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem", self.issues.len())?;
        if self.issues.len() != 1 {
            f.write_str("s")?;
        }
        f.write_str(")")?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Exponential {
        gamma_rate: f64,
        gamma: f64,
    },
    /// CSV file with columns `tau,re,im` on a uniform lag grid starting at 0.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Uniform,
    /// One-based level.
    Level(usize),
    Amplitudes(Vec<C64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Observable {
    /// `rho_ii`, zero-based.
    Population(usize),
    /// `|rho_ij|`, zero-based.
    Coherence(usize, usize),
    Entropy,
    /// `tr rho`, which is `M[|psi|^2]` for an ensemble.
    Trace,
}

impl Observable {
    pub fn parse(name: &str, dim: usize) -> Result<Self, String> {
        let levels = |digits: &str| -> Option<(usize, usize)> {
            let d: Vec<usize> = digits
                .chars()
                .map(|c| c.to_digit(10).map(|x| x as usize))
                .collect::<Option<_>>()?;
            match d[..] {
                [i, j] if (1..=dim).contains(&i) && (1..=dim).contains(&j) => Some((i - 1, j - 1)),
                _ => None,
            }
        };
        let bad = || format!("unknown observable `{name}` for a {dim}-level model");
        match name {
            "entropy" => Ok(Self::Entropy),
            "trace" => Ok(Self::Trace),
            _ => {
                if let Some(rest) = name.strip_prefix("rho_") {
                    match levels(rest) {
                        Some((i, j)) if i == j => Ok(Self::Population(i)),
                        Some(_) => Err(format!("`{name}` is off-diagonal; use coherence_ij or rho_entries")),
                        None => Err(bad()),
                    }
                } else if let Some(rest) = name.strip_prefix("coherence_") {
                    match levels(rest) {
                        Some((i, j)) if i != j => Ok(Self::Coherence(i, j)),
                        _ => Err(bad()),
                    }
                } else {
                    Err(bad())
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Self::Population(i) => format!("rho_{}{}", i + 1, i + 1),
            Self::Coherence(i, j) => format!("coherence_{}{}", i + 1, j + 1),
            Self::Entropy => "entropy".into(),
            Self::Trace => "trace".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub observables: Vec<Observable>,
    /// Zero-based `(i, j)` entries written to `rho.csv`.
    pub rho_entries: Vec<(usize, usize)>,
    /// Significant digits in CSV output.
    pub precision: usize,
    pub entropy_base: LogBase,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Family name as written, including shorthands like `spin_3half`.
    pub family_name: String,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub grid: TimeGrid,
    pub mode: Mode,
    pub trajectories: usize,
    pub seed: u64,
    pub order: usize,
    pub initial_state: InitialState,
    /// Run the halving-dt convergence probe on the coefficients.
    pub probe: bool,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn psi0(&self) -> StateVector {
        let d = self.model.dim();
        match &self.initial_state {
            InitialState::Uniform => {
                StateVector::new(vec![C64::new(1.0 / (d as f64).sqrt(), 0.0); d]).expect("finite amplitudes")
            }
            InitialState::Level(l) => StateVector::basis(d, l - 1),
            InitialState::Amplitudes(a) => StateVector::new(a.clone())
                .and_then(|s| s.normalized())
                .expect("validated at parse time"),
        }
    }

    /// Builds the kernel, reading the lag table relative to `base`.
    pub fn load_kernel(&self, base: &Path) -> Result<CorrelationKernel, String> {
        match &self.kernel {
            KernelSpec::Exponential { gamma_rate, gamma } => {
                CorrelationKernel::exponential(*gamma_rate, *gamma).map_err(|e| e.to_string())
            }
            KernelSpec::Table(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                read_lag_table(&text)
                    .map(CorrelationKernel::tabulated)
                    .map_err(|e| format!("{}: {e}", path.display()))
            }
        }
    }

    /// Canonical description of everything that affects the physics output.
    pub fn describe(&self) -> String {
        format!(
            "family={} params={:?} kernel={:?} grid=({}, {}) mode={} order={} initial={:?} probe={}",
            self.family_name,
            self.model.params(),
            self.kernel,
            self.grid.t_max(),
            self.grid.n_steps(),
            self.mode.name(),
            self.order,
            self.initial_state,
            self.probe
        )
    }
}

fn read_lag_table(text: &str) -> Result<TabulatedKernel, String> {
    let mut taus = Vec::new();
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", n + 1))?;
        if cols.len() != 3 {
            return Err(format!("line {}: expected tau,re,im", n + 1));
        }
        taus.push(cols[0]);
        values.push(C64::new(cols[1], cols[2]));
    }
    if taus.len() < 2 {
        return Err("lag table needs at least two rows".into());
    }
    if taus[0] != 0.0 {
        return Err("lag table must start at tau = 0".into());
    }
    let step = taus[1];
    for (k, &t) in taus.iter().enumerate() {
        if (t - k as f64 * step).abs() > 1e-9 * step.max(1.0) * (k as f64).max(1.0) {
            return Err(format!("row {} breaks the uniform lag spacing {step}", k + 1));
        }
    }
    TabulatedKernel::new(step, values).map_err(|e| e.to_string())
}

/// Looks up keys of one section and remembers which were read.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: Vec<String>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Table, name: &'static str, issues: &mut Vec<Issue>) -> Self {
        let table = match doc.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                issues.push(Issue {
                    key: name.into(),
                    problem: Problem::Type("a table"),
                });
                None
            }
            None => None,
        };
        Self {
            name,
            table,
            seen: Vec::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn raw(&mut self, k: &str) -> Option<&'a Value> {
        self.seen.push(k.to_string());
        self.table.and_then(|t| t.get(k))
    }

    fn required<T>(
        &mut self,
        k: &str,
        issues: &mut Vec<Issue>,
        conv: impl FnOnce(&Value) -> Result<T, Problem>,
    ) -> Option<T> {
        match self.raw(k) {
            None => {
                issues.push(Issue {
                    key: self.key(k),
                    problem: Problem::Missing,
                });
                None
            }
            Some(v) => self.convert(k, v, issues, conv),
        }
    }

    fn optional<T>(
        &mut self,
        k: &str,
        issues: &mut Vec<Issue>,
        conv: impl FnOnce(&Value) -> Result<T, Problem>,
    ) -> Option<Option<T>> {
        match self.raw(k) {
            None => Some(None),
            Some(v) => self.convert(k, v, issues, conv).map(Some),
        }
    }

    fn convert<T>(
        &self,
        k: &str,
        v: &Value,
        issues: &mut Vec<Issue>,
        conv: impl FnOnce(&Value) -> Result<T, Problem>,
    ) -> Option<T> {
        conv(v)
            .map_err(|problem| {
                issues.push(Issue {
                    key: self.key(k),
                    problem,
                })
            })
            .ok()
    }

    fn reject_unknown(&self, issues: &mut Vec<Issue>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.seen.iter().any(|s| s == k) {
                    issues.push(Issue {
                        key: self.key(k),
                        problem: Problem::Unknown,
                    });
                }
            }
        }
    }
}

fn float(v: &Value) -> Result<f64, Problem> {
    match v {
        Value::Float(x) if x.is_finite() => Ok(*x),
        Value::Float(_) => Err(Problem::Constraint("must be finite".into())),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Problem::Type("a number")),
    }
}

fn non_negative(v: &Value) -> Result<f64, Problem> {
    let x = float(v)?;
    if x < 0.0 {
        return Err(Problem::Constraint(format!("must be >= 0, got {x}")));
    }
    Ok(x)
}

fn integer(v: &Value) -> Result<i64, Problem> {
    v.as_integer().ok_or(Problem::Type("an integer"))
}

fn count(min: i64) -> impl Fn(&Value) -> Result<usize, Problem> {
    move |v| {
        let i = integer(v)?;
        if i < min {
            return Err(Problem::Constraint(format!("must be >= {min}, got {i}")));
        }
        Ok(i as usize)
    }
}

fn string(v: &Value) -> Result<String, Problem> {
    v.as_str().map(str::to_string).ok_or(Problem::Type("a string"))
}

/// A real number or a `[re, im]` pair.
fn complex(v: &Value) -> Result<C64, Problem> {
    match v {
        Value::Array(a) if a.len() == 2 => {
            let re = float(&a[0]).map_err(|_| Problem::Type("a number or [re, im]"))?;
            let im = float(&a[1]).map_err(|_| Problem::Type("a number or [re, im]"))?;
            Ok(C64::new(re, im))
        }
        _ => float(v)
            .map(|x| C64::new(x, 0.0))
            .map_err(|_| Problem::Type("a number or [re, im]")),
    }
}

fn list<T>(
    item: impl Fn(&Value) -> Result<T, Problem>,
    expected: &'static str,
) -> impl Fn(&Value) -> Result<Vec<T>, Problem> {
    move |v| {
        v.as_array()
            .ok_or(Problem::Type(expected))?
            .iter()
            .map(|x| item(x).map_err(|_| Problem::Type(expected)))
            .collect()
    }
}

fn sized<T>(n: usize) -> impl Fn(Vec<T>) -> Result<Vec<T>, Problem> {
    move |v| {
        if v.len() != n {
            return Err(Problem::Constraint(format!("expected {n} values, got {}", v.len())));
        }
        Ok(v)
    }
}

fn floats(v: &Value) -> Result<Vec<f64>, Problem> {
    list(float, "a list of numbers")(v)
}

fn complexes(v: &Value) -> Result<Vec<C64>, Problem> {
    list(complex, "a list of numbers or [re, im] pairs")(v)
}

fn drive(v: &Value) -> Result<DriveTerm, Problem> {
    let t = v.as_table().ok_or(Problem::Type("a list of drive tables"))?;
    if let Some(k) = t
        .keys()
        .find(|k| !["levels", "amplitude", "frequency"].contains(&k.as_str()))
    {
        return Err(Problem::Constraint(format!("unknown drive key `{k}`")));
    }
    let get = |k: &str| {
        t.get(k)
            .ok_or_else(|| Problem::Constraint(format!("drive lacks `{k}`")))
    };
    let levels = list(integer, "levels = [bra, ket]")(get("levels")?)?;
    if levels.len() != 2 || levels.iter().any(|&l| l < 1) {
        return Err(Problem::Constraint("levels must be two positive level numbers".into()));
    }
    let amplitude = complex(get("amplitude")?)?;
    let frequency = float(get("frequency")?)?;
    DriveTerm::new(levels[0] as usize, levels[1] as usize, amplitude, frequency)
        .map_err(|e| Problem::Constraint(e.to_string()))
}

struct ParsedModel {
    family_name: String,
    model: ModelSpec,
}

fn parse_model(s: &mut Section, issues: &mut Vec<Issue>) -> Option<ParsedModel> {
    let family_name = s.required("family", issues, string)?;
    let shorthand = match family_name.as_str() {
        "spin_half" => Some(1),
        "spin_1" => Some(2),
        "spin_3half" => Some(3),
        _ => None,
    };
    let family = match shorthand {
        Some(_) => ModelFamily::SpinL,
        None => match ModelFamily::from_name(&family_name) {
            Ok(f) => f,
            Err(e) => {
                // Still mark the other keys as read so the report stays focused.
                s.seen.extend(s.table.into_iter().flat_map(|t| t.keys().cloned()));
                issues.push(Issue {
                    key: s.key("family"),
                    problem: Problem::Constraint(e.to_string()),
                });
                return None;
            }
        },
    };
    let before = issues.len();
    let built = match family {
        ModelFamily::SpinL => {
            let twice_l = match shorthand {
                Some(t) => Some(t),
                None => s.required("twice_l", issues, count(1)).map(|t| t as u32),
            };
            let omega = s.required("omega", issues, float);
            (issues.len() == before).then(|| Some(build_spin_model(twice_l?, omega?)))
        }
        ModelFamily::ThreeLevelGeneral => {
            let w = s.required("omegas", issues, |v| sized(3)(floats(v)?));
            let k = s.required("kappas", issues, |v| sized(2)(complexes(v)?));
            (issues.len() == before).then(|| {
                let (w, k) = (w?, k?);
                Some(build_three_level([w[0], w[1], w[2]], [k[0], k[1]]))
            })
        }
        ModelFamily::SpinGeneral => {
            let c = s.required("c", issues, floats);
            let g = s.required("g", issues, complexes);
            (issues.len() == before).then(|| {
                let c = c?;
                if family_name == "spin_3half_general" && c.len() != 4 {
                    return Some(Err(nmqsd::models::ModelError::InvalidParameter {
                        name: "c",
                        reason: "spin_3half_general has four levels".into(),
                    }));
                }
                Some(build_spin_general(&c, &g?))
            })
        }
        ModelFamily::DrivenFourLevel => {
            let w = s.required("omegas", issues, |v| sized(4)(floats(v)?));
            let k = s.required("kappas", issues, |v| sized(3)(complexes(v)?));
            let d = s.optional("drives", issues, list(drive, "a list of drive tables"));
            (issues.len() == before).then(|| {
                let (w, k) = (w?, k?);
                Some(build_driven_four_level(
                    [w[0], w[1], w[2], w[3]],
                    [k[0], k[1], k[2]],
                    &d?.unwrap_or_default(),
                ))
            })
        }
        ModelFamily::MultiTransition => {
            let w = s.required("omegas", issues, floats);
            let k = s.required("kappas", issues, complexes);
            (issues.len() == before).then(|| Some(build_multi_transition(&w?, &k?)))
        }
        ModelFamily::BandModel => {
            let w = s.required("omegas", issues, floats);
            let lower = s.required("lower", issues, count(1));
            let k = s.required("kappas", issues, list(complexes, "a list of coupling rows"));
            (issues.len() == before).then(|| Some(build_band_model(&w?, lower?, &k?)))
        }
    };
    match built.flatten()? {
        Ok(model) => Some(ParsedModel { family_name, model }),
        Err(e) => {
            issues.push(Issue {
                key: s.key("family"),
                problem: Problem::Constraint(e.to_string()),
            });
            None
        }
    }
}

fn parse_kernel(s: &mut Section, issues: &mut Vec<Issue>) -> Option<KernelSpec> {
    let table = s.optional("table", issues, string)?;
    match table {
        Some(path) => {
            for k in ["gamma_rate", "gamma"] {
                if s.raw(k).is_some() {
                    issues.push(Issue {
                        key: s.key(k),
                        problem: Problem::Constraint("not allowed together with `kernel.table`".into()),
                    });
                }
            }
            Some(KernelSpec::Table(path.into()))
        }
        None => {
            let gamma_rate = s.required("gamma_rate", issues, non_negative);
            let gamma = s.required("gamma", issues, |v| {
                let g = non_negative(v)?;
                if g == 0.0 {
                    return Err(Problem::Constraint("must be > 0".into()));
                }
                Ok(g)
            });
            Some(KernelSpec::Exponential {
                gamma_rate: gamma_rate?,
                gamma: gamma?,
            })
        }
    }
}

fn initial_state(v: &Value) -> Result<InitialState, Problem> {
    match v {
        Value::String(s) if s == "uniform" => Ok(InitialState::Uniform),
        Value::Integer(l) if *l >= 1 => Ok(InitialState::Level(*l as usize)),
        Value::Array(_) => complexes(v).map(InitialState::Amplitudes),
        _ => Err(Problem::Type("\"uniform\", a level number or a list of amplitudes")),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        issues: vec![Issue {
            key: "<document>".into(),
            problem: Problem::Constraint(e.message().to_string()),
        }],
    })?;
    let mut issues = Vec::new();
    const SECTIONS: [&str; 5] = ["model", "kernel", "grid", "run", "output"];
    for k in doc.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            issues.push(Issue {
                key: k.clone(),
                problem: Problem::Unknown,
            });
        }
    }

    let mut model_s = Section::new(&doc, "model", &mut issues);
    let model = parse_model(&mut model_s, &mut issues);
    model_s.reject_unknown(&mut issues);

    let mut kernel_s = Section::new(&doc, "kernel", &mut issues);
    let kernel = parse_kernel(&mut kernel_s, &mut issues);
    kernel_s.reject_unknown(&mut issues);

    let mut grid_s = Section::new(&doc, "grid", &mut issues);
    let t_max = grid_s.required("t_max", &mut issues, |v| {
        let t = float(v)?;
        if t <= 0.0 {
            return Err(Problem::Constraint(format!("must be > 0, got {t}")));
        }
        Ok(t)
    });
    let n_steps = grid_s.required("n_steps", &mut issues, count(10));
    grid_s.reject_unknown(&mut issues);
    let grid = match (t_max, n_steps) {
        (Some(t), Some(n)) => TimeGrid::new(t, n)
            .map_err(|e| {
                issues.push(Issue {
                    key: "grid".into(),
                    problem: Problem::Constraint(e.to_string()),
                })
            })
            .ok(),
        _ => None,
    };

    let mut run_s = Section::new(&doc, "run", &mut issues);
    let mode = run_s.required("mode", &mut issues, |v| match v.as_str() {
        Some("linear") => Ok(Mode::Linear),
        Some("nonlinear") => Ok(Mode::Nonlinear),
        Some(other) => Err(Problem::Constraint(format!(
            "expected \"linear\" or \"nonlinear\", got \"{other}\""
        ))),
        None => Err(Problem::Type("a string")),
    });
    let trajectories = run_s.required("trajectories", &mut issues, count(1));
    let seed = run_s.required("seed", &mut issues, |v| count(0)(v).map(|s| s as u64));
    let order = run_s.optional("order", &mut issues, count(0)).flatten();
    let initial = run_s.required("initial_state", &mut issues, initial_state);
    let probe = run_s.optional("convergence_probe", &mut issues, |v| {
        v.as_bool().ok_or(Problem::Type("a boolean"))
    });
    run_s.reject_unknown(&mut issues);

    let mut out_s = Section::new(&doc, "output", &mut issues);
    let path = out_s.required("path", &mut issues, string);
    let observable_names = out_s.required("observables", &mut issues, list(string, "a list of names"));
    let entries = out_s.optional(
        "rho_entries",
        &mut issues,
        list(list(integer, "[i, j]"), "a list of [i, j] pairs"),
    );
    let precision = out_s.optional("precision", &mut issues, |v| {
        let p = count(1)(v)?;
        if p > ROUND_TRIP_DIGITS {
            return Err(Problem::Constraint(format!(
                "at most {ROUND_TRIP_DIGITS} significant digits"
            )));
        }
        Ok(p)
    });
    let entropy_base = out_s.optional("entropy_base", &mut issues, |v| match v.as_str() {
        Some("e") => Ok(LogBase::E),
        Some("2") => Ok(LogBase::Two),
        _ => Err(Problem::Type("\"e\" or \"2\"")),
    });
    out_s.reject_unknown(&mut issues);

    // Checks that need the model.
    let mut resolved_order = None;
    let mut observables = Vec::new();
    let mut rho_entries = Vec::new();
    if let Some(m) = &model {
        let dim = m.model.dim();
        let exact = m.model.noise_order_exact();
        match order {
            Some(k) if k > exact => issues.push(Issue {
                key: "run.order".into(),
                problem: Problem::Constraint(format!(
                    "truncation order {k} exceeds the exact order {exact} of `{}`",
                    m.family_name
                )),
            }),
            Some(k) if k > 2 => issues.push(Issue {
                key: "run.order".into(),
                problem: Problem::Constraint("orders above 2 are not implemented".into()),
            }),
            Some(k) => resolved_order = Some(k),
            None => resolved_order = Some(exact.min(1)),
        }
        match &initial {
            Some(InitialState::Level(l)) if *l > dim => issues.push(Issue {
                key: "run.initial_state".into(),
                problem: Problem::Constraint(format!("level {l} outside 1..={dim}")),
            }),
            Some(InitialState::Amplitudes(a)) if a.len() != dim || a.iter().all(|z| z.norm() == 0.0) => {
                issues.push(Issue {
                    key: "run.initial_state".into(),
                    problem: Problem::Constraint(format!("need {dim} amplitudes, not all zero")),
                })
            }
            _ => {}
        }
        for name in observable_names.iter().flatten() {
            match Observable::parse(name, dim) {
                Ok(o) if !observables.contains(&o) => observables.push(o),
                Ok(_) => {}
                Err(msg) => issues.push(Issue {
                    key: "output.observables".into(),
                    problem: Problem::Constraint(msg),
                }),
            }
        }
        for pair in entries.iter().flatten().flatten() {
            match pair[..] {
                [i, j] if (1..=dim as i64).contains(&i) && (1..=dim as i64).contains(&j) => {
                    rho_entries.push((i as usize - 1, j as usize - 1))
                }
                _ => issues.push(Issue {
                    key: "output.rho_entries".into(),
                    problem: Problem::Constraint(format!("{pair:?} is not a pair of levels in 1..={dim}")),
                }),
            }
        }
    }
    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }
    let m = model.expect("no issues implies a model");
    Ok(RunConfig {
        family_name: m.family_name,
        model: m.model,
        kernel: kernel.expect("checked"),
        grid: grid.expect("checked"),
        mode: mode.expect("checked"),
        trajectories: trajectories.expect("checked"),
        seed: seed.expect("checked"),
        order: resolved_order.expect("checked"),
        initial_state: initial.expect("checked"),
        probe: probe.flatten().unwrap_or(true),
        output: OutputSpec {
            path: path.expect("checked").into(),
            observables,
            rho_entries,
            precision: precision.flatten().unwrap_or(ROUND_TRIP_DIGITS),
            entropy_base: entropy_base.flatten().unwrap_or(LogBase::E),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observable_names() {
        assert_eq!(Observable::parse("rho_33", 4), Ok(Observable::Population(2)));
        assert_eq!(Observable::parse("coherence_14", 4), Ok(Observable::Coherence(0, 3)));
        assert!(Observable::parse("coherence_15", 4).is_err());
        assert!(Observable::parse("rho_12", 4).is_err());
        assert!(Observable::parse("purity", 4).is_err());
        assert_eq!(Observable::Coherence(1, 2).name(), "coherence_23");
    }

    #[test]
    fn lag_table_reader() {
        let t = read_lag_table("tau,re,im\n0,0.5,0\n0.1,0.4,-0.1\n0.2,0.3,-0.1\n").unwrap();
        assert_eq!(t.values().len(), 3);
        assert!((t.lag_step() - 0.1).abs() < 1e-15);
        assert!(read_lag_table("0,1,0\n0.1,1,0\n0.3,1,0\n").is_err());
        assert!(read_lag_table("0.1,1,0\n0.2,1,0\n").is_err());
    }
}
