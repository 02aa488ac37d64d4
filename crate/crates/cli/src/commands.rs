//! Subcommand implementations. Each returns a [`Report`] whose text the
//! binary prints, or a [`CliError`] that maps onto an exit code.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nmqsd::coefficients::{
    consistency_residual, integrate_coefficients_with, printed_defect, CoefficientError, CoefficientOptions,
    CoefficientTable, TableDetail,
};
use nmqsd::ensemble::{run_ensemble, von_neumann_entropy, EnsembleError, EnsembleOptions, EnsembleResult};
use nmqsd::linalg::DensityMatrix;
use nmqsd::models::{ModelError, ModelFamily};
use nmqsd::noise::{covariance_check, sample_noise, CorrelationKernel, NoiseError, TimeGrid};
use nmqsd::propagator::{PropagationError, Propagator};
use nmqsd::reference::{solve_convolutionless, solve_lindblad, solve_pseudomode, MasterEquationRun, ReferenceError};

use crate::config::{KernelSpec, Observable, RunConfig};
use crate::output::{format_number, write_tables, Table};

/// Standard errors below this are treated as this value when a deviation is
/// expressed in units of the standard error; it sits at the level of the
/// integrators' own discretization error.
pub const STDERR_FLOOR: f64 = 1e-6;
/// Largest pseudomode cutoff tried before giving up.
pub const MAX_CUTOFF: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Comparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    /// Which part of the pipeline failed.
    pub module: &'static str,
    pub message: String,
}

impl CliError {
    pub fn validation(module: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            module,
            message: message.into(),
        }
    }

    pub fn numeric(module: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            module,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Numeric => 2,
            ErrorKind::Comparison => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.module, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        Self::validation("config", e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::validation("models", e.to_string())
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::NotPositiveSemidefinite { .. } => Self::numeric("noise", e.to_string()),
            _ => Self::validation("noise", e.to_string()),
        }
    }
}

impl From<CoefficientError> for CliError {
    fn from(e: CoefficientError) -> Self {
        match e {
            CoefficientError::OrderTooHigh { .. }
            | CoefficientError::OrderUnsupported(_)
            | CoefficientError::ClosureNeedsExponential => Self::validation("coefficients", e.to_string()),
            CoefficientError::Kernel(k) => Self::from(k),
            _ => Self::numeric("coefficients", e.to_string()),
        }
    }
}

impl From<PropagationError> for CliError {
    fn from(e: PropagationError) -> Self {
        match e {
            PropagationError::Coefficients(c) => Self::from(c),
            PropagationError::NotNormalized { .. } | PropagationError::DimensionMismatch { .. } => {
                Self::validation("propagator", e.to_string())
            }
            _ => Self::numeric("propagator", e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Propagation(p) => Self::from(p),
            EnsembleError::Empty | EnsembleError::Workers(_) | EnsembleError::IndexOutOfRange { .. } => {
                Self::validation("ensemble", e.to_string())
            }
            _ => Self::numeric("ensemble", e.to_string()),
        }
    }
}

impl From<ReferenceError> for CliError {
    fn from(e: ReferenceError) -> Self {
        match e {
            ReferenceError::InvalidInitialState(_)
            | ReferenceError::DimensionMismatch { .. }
            | ReferenceError::NotNoiseFree { .. }
            | ReferenceError::NotExponential
            | ReferenceError::InvalidCutoff(_)
            | ReferenceError::TableMismatch(_) => Self::validation("reference", e.to_string()),
            _ => Self::numeric("reference", e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::validation("output", format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    Lindblad,
    Convolutionless,
    Pseudomode,
}

impl Oracle {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "lindblad" => Ok(Self::Lindblad),
            "convolutionless" => Ok(Self::Convolutionless),
            "pseudomode" => Ok(Self::Pseudomode),
            _ => Err(format!("unknown oracle `{s}` (lindblad, convolutionless, pseudomode)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lindblad => "lindblad",
            Self::Convolutionless => "convolutionless",
            Self::Pseudomode => "pseudomode",
        }
    }

    /// Convolutionless for noise-free models, pseudomode otherwise.
    pub fn default_for(cfg: &RunConfig) -> Self {
        if cfg.model.noise_order_exact() == 0 {
            Self::Convolutionless
        } else {
            Self::Pseudomode
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directory that relative paths in the configuration resolve against.
    pub base_dir: PathBuf,
    pub workers: Option<usize>,
    pub dry_run: bool,
    pub dump_coefficients: Option<PathBuf>,
    pub oracle: Option<Oracle>,
    pub threshold: f64,
    /// First pseudomode cutoff tried.
    pub cutoff: usize,
    pub realizations: usize,
    pub probes: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            base_dir: PathBuf::from("."),
            workers: None,
            dry_run: false,
            dump_coefficients: None,
            oracle: None,
            threshold: 4.0,
            cutoff: 4,
            realizations: 100_000,
            probes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub files: Vec<PathBuf>,
}

fn output_dir(cfg: &RunConfig, opts: &RunOptions) -> PathBuf {
    opts.base_dir.join(&cfg.output.path)
}

fn kernel(cfg: &RunConfig, opts: &RunOptions) -> Result<CorrelationKernel, CliError> {
    cfg.load_kernel(&opts.base_dir)
        .map_err(|e| CliError::validation("noise", e))
}

pub fn coefficients(
    cfg: &RunConfig,
    kernel: &CorrelationKernel,
    grid: TimeGrid,
    order: usize,
) -> Result<CoefficientTable, CliError> {
    let options = CoefficientOptions {
        probe_tolerance: if cfg.probe {
            CoefficientOptions::default().probe_tolerance
        } else {
            None
        },
        ..CoefficientOptions::default()
    };
    Ok(integrate_coefficients_with(&cfg.model, kernel, grid, order, &options)?)
}

fn describe_kernel(cfg: &RunConfig) -> String {
    match &cfg.kernel {
        KernelSpec::Exponential { gamma_rate, gamma } => {
            format!(
                "exponential, Gamma = {gamma_rate}, gamma = {gamma} (memory time {})",
                1.0 / gamma
            )
        }
        KernelSpec::Table(p) => format!("tabulated from {}", p.display()),
    }
}

fn plan(cfg: &RunConfig, opts: &RunOptions, files: &[String]) -> String {
    let mut s = String::new();
    let m = &cfg.model;
    let _ = writeln!(
        s,
        "model        {} ({}, {} levels)",
        cfg.family_name,
        m.family().description(),
        m.dim()
    );
    let _ = writeln!(
        s,
        "noise order  {} of exact {} ({} basis operators)",
        cfg.order,
        m.noise_order_exact(),
        m.layout().total()
    );
    let _ = writeln!(s, "kernel       {}", describe_kernel(cfg));
    let _ = writeln!(
        s,
        "grid         t_max = {}, {} steps, dt = {}",
        cfg.grid.t_max(),
        cfg.grid.n_steps(),
        cfg.grid.dt()
    );
    let _ = writeln!(
        s,
        "run          {} mode, {} trajectories, seed {}, initial {:?}",
        cfg.mode.name(),
        cfg.trajectories,
        cfg.seed,
        cfg.initial_state
    );
    let workers = opts.workers.map_or("machine default".to_string(), |w| w.to_string());
    let _ = writeln!(s, "workers      {workers}");
    let _ = writeln!(s, "output       {}", output_dir(cfg, opts).display());
    for f in files {
        let _ = writeln!(s, "  {f}");
    }
    s
}

fn planned_files(cfg: &RunConfig) -> Vec<String> {
    let mut f: Vec<String> = cfg
        .output
        .observables
        .iter()
        .map(|o| format!("{}.csv", o.name()))
        .collect();
    if !cfg.output.observables.is_empty() {
        f.push("observables.csv".into());
    }
    if !cfg.output.rho_entries.is_empty() {
        f.push("rho.csv".into());
    }
    f
}

/// Values and standard errors of one observable.
struct Series {
    values: Vec<f64>,
    stderr: Vec<f64>,
}

fn ensemble_series(
    ens: &EnsembleResult,
    obs: &Observable,
    cfg: &RunConfig,
    clamped: &mut usize,
) -> Result<Series, CliError> {
    let s = match *obs {
        Observable::Population(i) => ens.population_series(i)?,
        Observable::Coherence(i, j) => ens.coherence_series(i, j)?,
        Observable::Entropy => {
            let (s, c) = ens.entropy_series(cfg.output.entropy_base)?;
            *clamped += c;
            s
        }
        Observable::Trace => ens.trace_series(),
    };
    Ok(Series {
        values: s.values,
        stderr: s.stderr,
    })
}

fn reference_series(run: &MasterEquationRun, obs: &Observable, cfg: &RunConfig) -> Result<Series, CliError> {
    let values = match *obs {
        Observable::Population(i) => run.populations(i),
        Observable::Coherence(i, j) => run.coherence(i, j),
        Observable::Entropy => run
            .rho
            .iter()
            .map(|r| von_neumann_entropy(r, cfg.output.entropy_base))
            .collect::<Result<_, _>>()?,
        Observable::Trace => run.rho.iter().map(|r| r.trace().re).collect(),
    };
    let stderr = vec![0.0; values.len()];
    Ok(Series { values, stderr })
}

fn build_tables(
    cfg: &RunConfig,
    grid: &TimeGrid,
    rho: &[DensityMatrix],
    stderr: impl Fn(usize, usize, usize) -> f64,
    mut series: impl FnMut(&Observable) -> Result<Series, CliError>,
) -> Result<Vec<(String, Table)>, CliError> {
    let times: Vec<f64> = grid.times().collect();
    let mut tables = Vec::new();
    let mut combined = Table::new(times.clone());
    for obs in &cfg.output.observables {
        let s = series(obs)?;
        let name = obs.name();
        let mut t = Table::new(times.clone());
        t.push("value", s.values.clone());
        t.push("stderr", s.stderr.clone());
        tables.push((name.clone(), t));
        combined.push(name.clone(), s.values);
        combined.push(format!("{name}_stderr"), s.stderr);
    }
    if !cfg.output.observables.is_empty() {
        tables.push(("observables".into(), combined));
    }
    if !cfg.output.rho_entries.is_empty() {
        let mut t = Table::new(times);
        for &(i, j) in &cfg.output.rho_entries {
            let tag = format!("rho_{}{}", i + 1, j + 1);
            t.push(format!("re_{tag}"), rho.iter().map(|r| r.entry(i, j).re).collect());
            t.push(format!("im_{tag}"), rho.iter().map(|r| r.entry(i, j).im).collect());
            t.push(format!("abs_{tag}"), rho.iter().map(|r| r.entry(i, j).norm()).collect());
            t.push(
                format!("stderr_{tag}"),
                (0..rho.len()).map(|n| stderr(n, i, j)).collect(),
            );
        }
        tables.push(("rho".into(), t));
    }
    Ok(tables)
}

fn dump_coefficients(table: &CoefficientTable, path: &Path, digits: usize) -> Result<PathBuf, CliError> {
    let grid = table.grid();
    let mut t = Table::new(grid.times().collect());
    for (j, _) in table.layout().entries(0).iter().enumerate() {
        let label = format!("F0_{}", j + 1);
        t.push(
            format!("re_{label}"),
            (0..grid.len()).map(|n| table.obar0(n)[j].re).collect(),
        );
        t.push(
            format!("im_{label}"),
            (0..grid.len()).map(|n| table.obar0(n)[j].im).collect(),
        );
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    t.write_file(path, digits).map_err(|e| io_error(path, e))?;
    Ok(path.to_path_buf())
}

/// Consistency residual and printed-equation defect for the three-level
/// family, evaluated on a coarse copy of the grid.
fn three_level_diagnostics(cfg: &RunConfig, kernel: &CorrelationKernel) -> Result<String, CliError> {
    let steps = cfg.grid.n_steps().min(60);
    let grid = TimeGrid::new(cfg.grid.t_max(), steps)?;
    let options = CoefficientOptions {
        detail: TableDetail::Full,
        probe_tolerance: None,
        ..CoefficientOptions::default()
    };
    let table = integrate_coefficients_with(&cfg.model, kernel, grid, cfg.order, &options)?;
    let probe = sample_noise(kernel, grid, cfg.seed, u64::MAX)?;
    let mut worst: f64 = 0.0;
    for n in 3..steps - 2 {
        for m in 1..n - 2 {
            let r = consistency_residual(&cfg.model, &table, &probe, n, m)?;
            if !r.one_sided {
                worst = worst.max(r.relative);
            }
        }
    }
    let mut s = format!("consistency residual {worst:.3e} (relative, interior points, {steps}-step grid)\n");
    match printed_defect(&cfg.model, &table)? {
        Some(d) => {
            let _ = writeln!(
                s,
                "printed three-level equations: rhs defect {:.3e}, boundary defect {:.3e} over {} samples",
                d.rhs, d.boundary, d.samples
            );
        }
        None => s.push_str("printed three-level equations: not applicable\n"),
    }
    Ok(s)
}

pub fn simulate(cfg: &RunConfig, opts: &RunOptions) -> Result<Report, CliError> {
    if opts.dry_run {
        let kernel = kernel(cfg, opts)?;
        kernel.check_covers(&cfg.grid)?;
        return Ok(Report {
            text: format!("dry run, nothing written\n{}", plan(cfg, opts, &planned_files(cfg))),
            files: Vec::new(),
        });
    }
    let start = Instant::now();
    let kernel = kernel(cfg, opts)?;
    let table = coefficients(cfg, &kernel, cfg.grid, cfg.order)?;
    let mut files = Vec::new();
    let digits = cfg.output.precision;
    if let Some(path) = &opts.dump_coefficients {
        files.push(dump_coefficients(&table, &opts.base_dir.join(path), digits)?);
    }
    let coefficient_time = start.elapsed().as_secs_f64();
    let propagator = Propagator::new(&cfg.model, &table, cfg.mode)?;
    let psi0 = cfg.psi0();
    let ens = run_ensemble(
        &propagator,
        &psi0,
        &EnsembleOptions {
            trajectories: cfg.trajectories,
            seed: cfg.seed,
            workers: opts.workers,
            tag: cfg.describe(),
        },
    )?;
    let trajectory_time = start.elapsed().as_secs_f64() - coefficient_time;

    let rho = ens.rho_series();
    let mut clamped = 0;
    let tables = build_tables(
        cfg,
        &cfg.grid,
        &rho,
        |n, i, j| ens.stderr(n, i, j),
        |o| ensemble_series(&ens, o, cfg, &mut clamped),
    )?;
    let dir = output_dir(cfg, opts);
    files.extend(write_tables(&dir, &tables, digits).map_err(|e| io_error(&dir, e))?);

    let max_stderr = (0..cfg.grid.len())
        .flat_map(|n| ens.stderr_matrix(n))
        .fold(0.0, f64::max);
    let mut text = String::new();
    let _ = writeln!(text, "{}", plan(cfg, opts, &[]).trim_end());
    let _ = writeln!(text, "digest       {}", ens.config_digest);
    let _ = writeln!(
        text,
        "wall time    {:.2} s ({:.2} s coefficients, {:.2} s trajectories)",
        start.elapsed().as_secs_f64(),
        coefficient_time,
        trajectory_time
    );
    let _ = writeln!(
        text,
        "throughput   {:.1} trajectories/s",
        cfg.trajectories as f64 / trajectory_time.max(1e-9)
    );
    let _ = writeln!(text, "max stderr   {}", format_number(max_stderr, 4));
    if clamped > 0 {
        let _ = writeln!(
            text,
            "warning      {clamped} slightly negative eigenvalues clamped in the entropy"
        );
    }
    if cfg.model.family() == ModelFamily::ThreeLevelGeneral {
        text.push_str(&three_level_diagnostics(cfg, &kernel)?);
    }
    for f in &files {
        let _ = writeln!(text, "wrote        {}", f.display());
    }
    Ok(Report { text, files })
}

fn run_oracle(
    cfg: &RunConfig,
    kernel: &CorrelationKernel,
    oracle: Oracle,
    first_cutoff: usize,
) -> Result<MasterEquationRun, CliError> {
    let rho0 = cfg.psi0().projector();
    match oracle {
        Oracle::Lindblad => {
            let (gamma, c) = kernel
                .exponential_params()
                .ok_or_else(|| CliError::validation("reference", "the lindblad oracle needs an exponential kernel"))?;
            // c = Gamma gamma / 2.
            Ok(solve_lindblad(&cfg.model, 2.0 * c / gamma, &rho0, cfg.grid)?)
        }
        Oracle::Convolutionless => {
            if cfg.model.noise_order_exact() > 0 {
                return Err(CliError::validation(
                    "reference",
                    format!(
                        "the convolutionless oracle needs a noise-free model; `{}` has exact noise order {}",
                        cfg.family_name,
                        cfg.model.noise_order_exact()
                    ),
                ));
            }
            let table = coefficients(cfg, kernel, cfg.grid, 0)?;
            Ok(solve_convolutionless(&cfg.model, &table, &rho0)?)
        }
        Oracle::Pseudomode => {
            let mut cutoff = first_cutoff.max(2);
            loop {
                match solve_pseudomode(&cfg.model, kernel, cutoff, &rho0, cfg.grid) {
                    Err(ReferenceError::CutoffNotConverged { suggested, .. }) if suggested <= MAX_CUTOFF => {
                        cutoff = suggested
                    }
                    other => return Ok(other?),
                }
            }
        }
    }
}

fn oracle_summary(run: &MasterEquationRun) -> String {
    let mut s = format!(
        "oracle       {} (max trace drift {:.2e}, min eigenvalue {:.2e}",
        run.method.name(),
        run.max_trace_drift,
        run.min_eigenvalue
    );
    if let nmqsd::reference::Method::Pseudomode { cutoff } = run.method {
        let _ = write!(s, ", cutoff {cutoff}");
    }
    if let Some(d) = run.cutoff_difference {
        let _ = write!(s, ", cutoff change {d:.2e}");
    }
    s.push_str(")\n");
    s
}

pub fn reference(cfg: &RunConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let oracle = opts.oracle.unwrap_or_else(|| Oracle::default_for(cfg));
    let dir = output_dir(cfg, opts).join("reference");
    if opts.dry_run {
        return Ok(Report {
            text: format!(
                "dry run, nothing written\noracle       {}\n{}",
                oracle.name(),
                plan(cfg, opts, &planned_files(cfg))
            ),
            files: Vec::new(),
        });
    }
    let start = Instant::now();
    let kernel = kernel(cfg, opts)?;
    let run = run_oracle(cfg, &kernel, oracle, opts.cutoff)?;
    let tables = build_tables(
        cfg,
        &cfg.grid,
        &run.rho,
        |_, _, _| 0.0,
        |o| reference_series(&run, o, cfg),
    )?;
    let files = write_tables(&dir, &tables, cfg.output.precision).map_err(|e| io_error(&dir, e))?;
    let mut text = oracle_summary(&run);
    let _ = writeln!(text, "wall time    {:.2} s", start.elapsed().as_secs_f64());
    for f in &files {
        let _ = writeln!(text, "wrote        {}", f.display());
    }
    Ok(Report { text, files })
}

/// Largest deviation of one density-matrix entry from the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryDeviation {
    pub i: usize,
    pub j: usize,
    /// `max_t |rho_ens - rho_ref| / stderr`.
    pub sigmas: f64,
    pub t: f64,
    pub absolute: f64,
}

/// Entrywise deviations (upper triangle) of an ensemble from an oracle run.
pub fn deviations(ens: &EnsembleResult, run: &MasterEquationRun) -> Vec<EntryDeviation> {
    let d = ens.dim();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            let mut worst = EntryDeviation {
                i,
                j,
                sigmas: 0.0,
                t: 0.0,
                absolute: 0.0,
            };
            for (n, r) in run.rho.iter().enumerate() {
                let diff = (ens.rho(n).entry(i, j) - r.entry(i, j)).norm();
                let z = diff / ens.stderr(n, i, j).max(STDERR_FLOOR);
                if z > worst.sigmas {
                    worst.sigmas = z;
                    worst.t = ens.grid.time(n);
                }
                worst.absolute = worst.absolute.max(diff);
            }
            out.push(worst);
        }
    }
    out
}

pub fn compare(cfg: &RunConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let oracle = opts.oracle.unwrap_or_else(|| Oracle::default_for(cfg));
    if opts.dry_run {
        return Ok(Report {
            text: format!(
                "dry run, nothing written\noracle       {} (threshold {} stderr)\n{}",
                oracle.name(),
                opts.threshold,
                plan(cfg, opts, &[])
            ),
            files: Vec::new(),
        });
    }
    let start = Instant::now();
    let kernel = kernel(cfg, opts)?;
    let run = run_oracle(cfg, &kernel, oracle, opts.cutoff)?;
    let table = coefficients(cfg, &kernel, cfg.grid, cfg.order)?;
    let propagator = Propagator::new(&cfg.model, &table, cfg.mode)?;
    let ens = run_ensemble(
        &propagator,
        &cfg.psi0(),
        &EnsembleOptions {
            trajectories: cfg.trajectories,
            seed: cfg.seed,
            workers: opts.workers,
            tag: cfg.describe(),
        },
    )?;
    let devs = deviations(&ens, &run);
    let mut text = oracle_summary(&run);
    let _ = writeln!(
        text,
        "ensemble     {} mode, order {}, {} trajectories",
        cfg.mode.name(),
        cfg.order,
        cfg.trajectories
    );
    let _ = writeln!(text, "entry   max |diff|/stderr   at t      max |diff|");
    for d in &devs {
        let _ = writeln!(
            text,
            "rho_{}{}  {:>17.3} {:>9.4} {:>13.3e}",
            d.i + 1,
            d.j + 1,
            d.sigmas,
            d.t,
            d.absolute
        );
    }
    let worst = devs.iter().map(|d| d.sigmas).fold(0.0, f64::max);
    let passed = worst < opts.threshold;
    let _ = writeln!(
        text,
        "result       {} (max {:.3} stderr, threshold {})",
        if passed { "pass" } else { "FAIL" },
        worst,
        opts.threshold
    );
    let _ = writeln!(text, "wall time    {:.2} s", start.elapsed().as_secs_f64());
    if passed {
        Ok(Report {
            text,
            files: Vec::new(),
        })
    } else {
        Err(CliError {
            kind: ErrorKind::Comparison,
            module: "compare",
            message: text,
        })
    }
}

pub fn noise_check(cfg: &RunConfig, opts: &RunOptions) -> Result<Report, CliError> {
    if opts.realizations < 2 {
        return Err(CliError::validation("noise", "need at least two realizations"));
    }
    let kernel = kernel(cfg, opts)?;
    let report = covariance_check(&kernel, cfg.grid, opts.realizations, cfg.seed, opts.probes)?;
    let mut text = format!(
        "noise check  {} realizations, {}x{} probes, seed {}\n",
        report.realizations, opts.probes, opts.probes, cfg.seed
    );
    let worst = report
        .probes
        .iter()
        .max_by(|a, b| a.z().total_cmp(&b.z()))
        .expect("at least one probe");
    let _ = writeln!(
        text,
        "covariance   max {:.3} stderr at (t, s) = ({}, {}): sample {:.5}, analytic {:.5}",
        report.max_z(),
        worst.t,
        worst.s,
        worst.sample,
        worst.analytic
    );
    let _ = writeln!(text, "pseudo-cov   max {:.3} stderr", report.max_pseudo_z());
    let passed = report.passes(opts.threshold);
    let _ = writeln!(
        text,
        "result       {} (threshold {})",
        if passed { "pass" } else { "FAIL" },
        opts.threshold
    );
    if passed {
        Ok(Report {
            text,
            files: Vec::new(),
        })
    } else {
        Err(CliError {
            kind: ErrorKind::Comparison,
            module: "noise-check",
            message: text,
        })
    }
}

pub fn list_models() -> String {
    let keys = |f: ModelFamily| match f {
        ModelFamily::SpinL => "twice_l, omega (or family spin_half / spin_1 / spin_3half with omega)",
        ModelFamily::ThreeLevelGeneral => "omegas = [3], kappas = [2]",
        ModelFamily::SpinGeneral => "c = [N], g = [N-1] (alias spin_3half_general, N = 4)",
        ModelFamily::DrivenFourLevel => "omegas = [4], kappas = [3], drives = [{ levels, amplitude, frequency }]",
        ModelFamily::MultiTransition => "omegas = [N], kappas = [N-1]",
        ModelFamily::BandModel => "omegas = [N], lower, kappas = [[upper] x lower]",
    };
    let mut s = String::new();
    for f in ModelFamily::ALL {
        let exact = if f.is_chain() {
            "noise order dim-2"
        } else {
            "noise-free"
        };
        let _ = writeln!(s, "{:<20} {} ({exact})", f.name(), f.description());
        let _ = writeln!(s, "{:<20} keys: {}", "", keys(f));
    }
    s
}
