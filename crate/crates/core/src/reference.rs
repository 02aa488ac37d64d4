//! Deterministic master-equation integrators used as oracles for the
//! trajectory ensembles.
//!
//! All three solvers use fixed-step RK4 on the trajectory grid and return the
//! reduced density matrix at every grid point.

use crate::coefficients::CoefficientTable;
use crate::linalg::{CMatrix, DensityMatrix, LinalgError, C64, I, ONE, ZERO};
use crate::models::{DriveTerm, ModelSpec};
use crate::noise::{CorrelationKernel, TimeGrid};

const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const POSITIVITY_FLOOR: f64 = -1e-8;
const CUTOFF_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReferenceError {
    #[error("initial state is not a density matrix: {0}")]
    InvalidInitialState(String),
    #[error("model has dimension {model} but the initial state has dimension {state}")]
    DimensionMismatch { model: usize, state: usize },
    #[error("coefficient table does not belong to this model ({0})")]
    TableMismatch(String),
    #[error("noise-order {order} model has no noise-free master equation; use the trajectory ensemble")]
    NotNoiseFree { order: usize },
    #[error("the pseudomode dilation needs an exponential correlation kernel")]
    NotExponential,
    #[error("boson cutoff must be at least 2, got {0}")]
    InvalidCutoff(usize),
    #[error("cutoff {cutoff} is not converged: cutoff {next} differs by {difference:e}; try cutoff {suggested}")]
    CutoffNotConverged {
        cutoff: usize,
        next: usize,
        difference: f64,
        suggested: usize,
    },
    #[error("trace drifted by {drift:e} at t = {t}; reduce dt")]
    TraceDrift { t: f64, drift: f64 },
    #[error("eigenvalue {value:e} at t = {t} is below {POSITIVITY_FLOOR:e}; reduce dt")]
    Unphysical { t: f64, value: f64 },
    #[error("non-finite density matrix at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lindblad,
    Convolutionless,
    Pseudomode { cutoff: usize },
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lindblad => "lindblad",
            Method::Convolutionless => "convolutionless",
            Method::Pseudomode { .. } => "pseudomode",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquationRun {
    pub grid: TimeGrid,
    pub method: Method,
    pub rho: Vec<DensityMatrix>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    /// Largest entrywise change when the pseudomode cutoff is raised by two.
    pub cutoff_difference: Option<f64>,
}

impl MasterEquationRun {
    pub fn populations(&self, i: usize) -> Vec<f64> {
        self.rho.iter().map(|r| r.entry(i, i).re).collect()
    }

    pub fn coherence(&self, i: usize, j: usize) -> Vec<f64> {
        self.rho.iter().map(|r| r.entry(i, j).norm()).collect()
    }
}

fn check_initial(model: &ModelSpec, rho0: &DensityMatrix) -> Result<(), ReferenceError> {
    if rho0.dim() != model.dim() {
        return Err(ReferenceError::DimensionMismatch {
            model: model.dim(),
            state: rho0.dim(),
        });
    }
    let tr = rho0.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(ReferenceError::InvalidInitialState(format!("trace {tr}")));
    }
    let min = rho0
        .eigvals()
        .map_err(|e| ReferenceError::InvalidInitialState(e.to_string()))?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(ReferenceError::InvalidInitialState(format!("eigenvalue {min:e}")));
    }
    Ok(())
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    &a.mul_unchecked(b) - &b.mul_unchecked(a)
}

fn rk4(rho: &CMatrix, t: f64, dt: f64, f: &impl Fn(f64, &CMatrix) -> CMatrix) -> CMatrix {
    let stage = |k: &CMatrix, h: f64| {
        let mut y = rho.clone();
        y.axpy(C64::new(h, 0.0), k);
        y
    };
    let k1 = f(t, rho);
    let k2 = f(t + dt / 2.0, &stage(&k1, dt / 2.0));
    let k3 = f(t + dt / 2.0, &stage(&k2, dt / 2.0));
    let k4 = f(t + dt, &stage(&k3, dt));
    let mut out = rho.clone();
    out.axpy(C64::new(dt / 6.0, 0.0), &k1);
    out.axpy(C64::new(dt / 3.0, 0.0), &k2);
    out.axpy(C64::new(dt / 3.0, 0.0), &k3);
    out.axpy(C64::new(dt / 6.0, 0.0), &k4);
    out
}

/// Hermitian part, which removes round-off asymmetry without touching the
/// RK4 truncation error.
fn symmetrize(m: &CMatrix) -> CMatrix {
    let mut h = m + &m.adjoint();
    h = h.scale_real(0.5);
    h
}

/// Runs `f` from `rho0`, checking trace and positivity of the reduced state
/// returned by `reduce` at every grid point.
fn integrate(
    grid: TimeGrid,
    method: Method,
    rho0: CMatrix,
    f: impl Fn(f64, &CMatrix) -> CMatrix,
    reduce: impl Fn(&CMatrix) -> CMatrix,
) -> Result<MasterEquationRun, ReferenceError> {
    let dt = grid.dt();
    let mut rho = rho0;
    let mut out = Vec::with_capacity(grid.len());
    let mut max_drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for n in 0..grid.len() {
        let t = grid.time(n);
        if n > 0 {
            rho = symmetrize(&rk4(&rho, grid.time(n - 1), dt, &f));
        }
        if !rho.is_finite() {
            return Err(ReferenceError::NonFinite(t));
        }
        let drift = (rho.trace() - ONE).norm();
        max_drift = max_drift.max(drift);
        if drift > TRACE_DRIFT_LIMIT {
            return Err(ReferenceError::TraceDrift { t, drift });
        }
        let reduced = DensityMatrix::from_matrix(reduce(&rho))?;
        let lowest = reduced.eigvals()?.into_iter().fold(f64::INFINITY, f64::min);
        if lowest < POSITIVITY_FLOOR {
            return Err(ReferenceError::Unphysical { t, value: lowest });
        }
        min_eig = min_eig.min(lowest);
        out.push(reduced);
    }
    Ok(MasterEquationRun {
        grid,
        method,
        rho: out,
        max_trace_drift: max_drift,
        min_eigenvalue: min_eig,
        cutoff_difference: None,
    })
}

/// `d rho/dt = -i[H, rho] + (Gamma/2)([L, rho L^dag] + [L rho, L^dag])`.
pub fn solve_lindblad(
    model: &ModelSpec,
    gamma_rate: f64,
    rho0: &DensityMatrix,
    grid: TimeGrid,
) -> Result<MasterEquationRun, ReferenceError> {
    check_initial(model, rho0)?;
    let l = model.lindblad().clone();
    let ldag = l.adjoint();
    let ldl = ldag.mul_unchecked(&l);
    let half = gamma_rate / 2.0;
    let f = |t: f64, rho: &CMatrix| {
        let mut d = commutator(&model.hamiltonian(t), rho).scale(-I);
        let jump = l.mul_unchecked(rho).mul_unchecked(&ldag);
        let anti = &ldl.mul_unchecked(rho) + &rho.mul_unchecked(&ldl);
        d.axpy(C64::new(2.0 * half, 0.0), &jump);
        d.axpy(C64::new(-half, 0.0), &anti);
        d
    };
    integrate(grid, Method::Lindblad, rho0.matrix().clone(), f, |r| r.clone())
}

/// `d rho/dt = -i[H, rho] + [L, rho Obar^dag] + [Obar rho, L^dag]` with the
/// noise-free `Obar(t)` from `table`, linearly interpolated between grid
/// points.
pub fn solve_convolutionless(
    model: &ModelSpec,
    table: &CoefficientTable,
    rho0: &DensityMatrix,
) -> Result<MasterEquationRun, ReferenceError> {
    if model.noise_order_exact() > 0 {
        return Err(ReferenceError::NotNoiseFree {
            order: model.noise_order_exact(),
        });
    }
    if table.layout() != model.layout() {
        return Err(ReferenceError::TableMismatch("operator basis differs".into()));
    }
    check_initial(model, rho0)?;
    let grid = *table.grid();
    let obar: Vec<CMatrix> = (0..grid.len()).map(|n| table.obar0_matrix(n)).collect();
    let l = model.lindblad().clone();
    let ldag = l.adjoint();
    let dt = grid.dt();
    let obar_at = |t: f64| {
        let x = (t / dt).clamp(0.0, grid.n_steps() as f64);
        let n = (x.floor() as usize).min(grid.n_steps().saturating_sub(1));
        let w = x - n as f64;
        if grid.n_steps() == 0 || w == 0.0 {
            return obar[n].clone();
        }
        let mut o = obar[n].scale_real(1.0 - w);
        o.axpy(C64::new(w, 0.0), &obar[n + 1]);
        o
    };
    let f = |t: f64, rho: &CMatrix| {
        let o = obar_at(t);
        let mut d = commutator(&model.hamiltonian(t), rho).scale(-I);
        d += &commutator(&l, &rho.mul_unchecked(&o.adjoint()));
        d += &commutator(&o.mul_unchecked(rho), &ldag);
        d
    };
    integrate(grid, Method::Convolutionless, rho0.matrix().clone(), f, |r| r.clone())
}

/// Sparse operator on the system-times-mode space.
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                if m[(r, c)] != ZERO {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect(),
        }
    }

    /// `out += a * self * x`.
    fn left(&self, x: &CMatrix, a: C64, out: &mut CMatrix) {
        let d = x.cols();
        let (xs, os) = (x.as_slice(), out.as_mut_slice());
        for &(r, c, v) in &self.entries {
            let s = a * v;
            for k in 0..d {
                os[r * d + k] += s * xs[c * d + k];
            }
        }
    }

    /// `out += a * x * self`.
    fn right(&self, x: &CMatrix, a: C64, out: &mut CMatrix) {
        let d = x.rows();
        let (xs, os) = (x.as_slice(), out.as_mut_slice());
        for &(r, c, v) in &self.entries {
            let s = a * v;
            for k in 0..d {
                os[k * d + c] += s * xs[k * d + r];
            }
        }
    }
}

fn partial_trace_mode(rho: &CMatrix, dim: usize, cutoff: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| {
        (0..cutoff).map(|k| rho[(i * cutoff + k, j * cutoff + k)]).sum()
    })
}

fn run_pseudomode(
    model: &ModelSpec,
    gamma: f64,
    g: f64,
    cutoff: usize,
    rho0: &DensityMatrix,
    grid: TimeGrid,
) -> Result<MasterEquationRun, ReferenceError> {
    let dim = model.dim();
    let id_mode = CMatrix::identity(cutoff);
    let id_sys = CMatrix::identity(dim);
    let a = CMatrix::from_fn(cutoff, cutoff, |r, c| {
        if c == r + 1 {
            C64::new((c as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let l = model.lindblad();
    // g (L^dag a + L a^dag)
    let coupling = (&l.adjoint().kron(&a) + &l.kron(&a.adjoint())).scale_real(g);
    let big_a = id_sys.kron(&a);
    let jump = Sparse::from_dense(&big_a);
    let jump_dag = jump.adjoint();
    let number = Sparse::from_dense(&big_a.adjoint().mul_unchecked(&big_a));
    let coupling = Sparse::from_dense(&coupling);
    let static_h = Sparse::from_dense(&model.static_hamiltonian().kron(&id_mode));
    // Each drive contributes v(t) |bra><ket| + h.c.
    let drives: Vec<(Sparse, Sparse, &DriveTerm)> = model
        .drives()
        .iter()
        .map(|d| {
            let op = Sparse::from_dense(&CMatrix::unit(dim, d.bra - 1, d.ket - 1).kron(&id_mode));
            let op_dag = op.adjoint();
            (op, op_dag, d)
        })
        .collect();
    let rate = 2.0 * gamma;
    let f = |t: f64, rho: &CMatrix| {
        let mut out = CMatrix::zeros(rho.rows(), rho.cols());
        for h in [&static_h, &coupling] {
            h.left(rho, -I, &mut out);
            h.right(rho, I, &mut out);
        }
        for (op, op_dag, d) in &drives {
            let v = d.value(t);
            op.left(rho, -I * v, &mut out);
            op.right(rho, I * v, &mut out);
            op_dag.left(rho, -I * v.conj(), &mut out);
            op_dag.right(rho, I * v.conj(), &mut out);
        }
        let mut ar = CMatrix::zeros(rho.rows(), rho.cols());
        jump.left(rho, ONE, &mut ar);
        jump_dag.right(&ar, C64::new(rate, 0.0), &mut out);
        number.left(rho, C64::new(-rate / 2.0, 0.0), &mut out);
        number.right(rho, C64::new(-rate / 2.0, 0.0), &mut out);
        out
    };
    let vacuum = CMatrix::unit(cutoff, 0, 0);
    let run = integrate(
        grid,
        Method::Pseudomode { cutoff },
        rho0.matrix().kron(&vacuum),
        f,
        |r| partial_trace_mode(r, dim, cutoff),
    )?;
    Ok(run)
}

/// Single damped bosonic mode with coupling `g = sqrt(Gamma gamma / 2)` and
/// decay `2 gamma`, starting in vacuum. Also runs `cutoff + 2` and fails if
/// the two reduced trajectories differ by `1e-6` or more.
pub fn solve_pseudomode(
    model: &ModelSpec,
    kernel: &CorrelationKernel,
    cutoff: usize,
    rho0: &DensityMatrix,
    grid: TimeGrid,
) -> Result<MasterEquationRun, ReferenceError> {
    let (gamma, c) = kernel.exponential_params().ok_or(ReferenceError::NotExponential)?;
    if cutoff < 2 {
        return Err(ReferenceError::InvalidCutoff(cutoff));
    }
    check_initial(model, rho0)?;
    let g = c.sqrt();
    let mut run = run_pseudomode(model, gamma, g, cutoff, rho0, grid)?;
    let check = run_pseudomode(model, gamma, g, cutoff + 2, rho0, grid)?;
    let difference = run
        .rho
        .iter()
        .zip(&check.rho)
        .map(|(a, b)| (a.matrix() - b.matrix()).norm_max())
        .fold(0.0, f64::max);
    if difference >= CUTOFF_TOLERANCE {
        return Err(ReferenceError::CutoffNotConverged {
            cutoff,
            next: cutoff + 2,
            difference,
            suggested: cutoff + 4,
        });
    }
    run.cutoff_difference = Some(difference);
    Ok(run)
}
