//! Single-trajectory propagation of the linear and nonlinear time-local
//! QSD equations.
//!
//! Linear mode integrates
//! `d_t psi = [-iH + L z*_t - L^dag Obar(t, z*)] psi`. Nonlinear mode
//! integrates the normalized state with the shifted noise
//! `z~*_t = z*_t + int_0^t alpha*(t, s) <L^dag>_s ds`:
//!
//! ```text
//! d_t psi = [-iH + (L - <L>) z~*_t + <L^dag> (Obar - <Obar>) - (L^dag Obar - <L^dag Obar>)] psi
//! ```
//!
//! Here `Obar(t, z~*)` is evaluated on the shifted path as seen at time `t`,
//! `z~*_s(t) = z*_s + int_0^t alpha*(s, u) <L^dag>_u du` for every `s <= t`,
//! not on the values each sample had when it was first drawn. The
//! `<L^dag> Obar` term above is exactly the drift of that path.
//!
//! Both use one Heun step per grid interval with the noise taken at the
//! interval ends.

use crate::coefficients::{
    assemble_obar_values, CoefficientError, CoefficientRoute, CoefficientTable, MemorySeries, ObarTracker,
};
use crate::linalg::{CMatrix, StateVector, C64, ZERO};
use crate::models::ModelSpec;
use crate::noise::{NoiseError, NoiseRealization, NoiseSampler, NoiseShift, TimeGrid};

/// Norm below which a nonlinear step is considered collapsed.
pub const NORM_COLLAPSE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagationError {
    #[error("state became non-finite at t = {t} (stream {stream_id})")]
    NonFinite { t: f64, stream_id: u64 },
    #[error("state norm collapsed to {norm:e} at t = {t} (stream {stream_id})")]
    NormCollapse { t: f64, norm: f64, stream_id: u64 },
    #[error("initial state must be normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("dimension mismatch: model has {model} levels, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Coefficients(#[from] CoefficientError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Linear,
    Nonlinear,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
        }
    }
}

/// Operators entering one Heun stage.
#[derive(Debug, Clone, Copy)]
struct StageInputs<'a> {
    /// `-iH(t)`.
    minus_i_h: &'a CMatrix,
    obar: &'a CMatrix,
    /// Noise sample (shifted in nonlinear mode).
    z: C64,
}

fn linear_rhs(l: &CMatrix, ldag: &CMatrix, st: &StageInputs, psi: &[C64]) -> Vec<C64> {
    let h = st.minus_i_h.mul_vec(psi);
    let lp = l.mul_vec(psi);
    let lo = ldag.mul_vec(&st.obar.mul_vec(psi));
    h.iter().zip(&lp).zip(&lo).map(|((a, b), c)| a + b * st.z - c).collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nonlinear_rhs(l: &CMatrix, ldag: &CMatrix, st: &StageInputs, psi: &[C64]) -> Vec<C64> {
    let nsq = dot(psi, psi).re;
    let h = st.minus_i_h.mul_vec(psi);
    let lp = l.mul_vec(psi);
    let op = st.obar.mul_vec(psi);
    let lop = ldag.mul_vec(&op);
    let exp_l = dot(psi, &lp) / nsq;
    let exp_ldag = exp_l.conj();
    let exp_o = dot(psi, &op) / nsq;
    let exp_lo = dot(psi, &lop) / nsq;
    (0..psi.len())
        .map(|k| {
            h[k] + (lp[k] - exp_l * psi[k]) * st.z + exp_ldag * (op[k] - exp_o * psi[k]) - (lop[k] - exp_lo * psi[k])
        })
        .collect()
}

fn heun(
    psi: &[C64],
    dt: f64,
    start: &StageInputs,
    end: &StageInputs,
    f: impl Fn(&StageInputs, &[C64]) -> Vec<C64>,
) -> Vec<C64> {
    let k1 = f(start, psi);
    let pred: Vec<C64> = psi.iter().zip(&k1).map(|(p, k)| p + k * dt).collect();
    let k2 = f(end, &pred);
    psi.iter()
        .zip(k1.iter().zip(&k2))
        .map(|(p, (a, b))| p + (a + b) * (0.5 * dt))
        .collect()
}

fn check_inputs(psi: &StateVector, model: &ModelSpec, dt: f64) -> Result<(), PropagationError> {
    if psi.dim() != model.dim() {
        return Err(PropagationError::DimensionMismatch {
            model: model.dim(),
            input: psi.dim(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PropagationError::InvalidStep(dt));
    }
    Ok(())
}

/// One Heun step of the linear equation from `t` to `t + dt`, with `Obar`
/// and the noise given at both ends of the step.
pub fn step_linear(
    psi: &StateVector,
    model: &ModelSpec,
    obar: (&CMatrix, &CMatrix),
    z: (C64, C64),
    t: f64,
    dt: f64,
) -> Result<StateVector, PropagationError> {
    check_inputs(psi, model, dt)?;
    let (h0, h1) = (model.minus_i_h(t), model.minus_i_h(t + dt));
    let l = model.lindblad();
    let ldag = l.adjoint();
    let start = StageInputs {
        minus_i_h: &h0,
        obar: obar.0,
        z: z.0,
    };
    let end = StageInputs {
        minus_i_h: &h1,
        obar: obar.1,
        z: z.1,
    };
    let out = heun(psi.amplitudes(), dt, &start, &end, |st, v| linear_rhs(l, &ldag, st, v));
    finish_linear(out, t + dt, 0)
}

/// One Heun step of the nonlinear equation. `obar.1` and `z_shifted.1` are
/// the predicted end-of-step values; the result is renormalized.
pub fn step_nonlinear(
    psi: &StateVector,
    model: &ModelSpec,
    obar: (&CMatrix, &CMatrix),
    z_shifted: (C64, C64),
    t: f64,
    dt: f64,
) -> Result<StateVector, PropagationError> {
    check_inputs(psi, model, dt)?;
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(PropagationError::NotNormalized { norm });
    }
    let (h0, h1) = (model.minus_i_h(t), model.minus_i_h(t + dt));
    let l = model.lindblad();
    let ldag = l.adjoint();
    let start = StageInputs {
        minus_i_h: &h0,
        obar: obar.0,
        z: z_shifted.0,
    };
    let end = StageInputs {
        minus_i_h: &h1,
        obar: obar.1,
        z: z_shifted.1,
    };
    let out = heun(psi.amplitudes(), dt, &start, &end, |st, v| {
        nonlinear_rhs(l, &ldag, st, v)
    });
    finish_nonlinear(out, t + dt, 0)
}

fn finish_linear(out: Vec<C64>, t: f64, stream_id: u64) -> Result<StateVector, PropagationError> {
    if out.iter().any(|z| !z.is_finite()) {
        return Err(PropagationError::NonFinite { t, stream_id });
    }
    Ok(StateVector::from_vec_unchecked(out))
}

fn finish_nonlinear(mut out: Vec<C64>, t: f64, stream_id: u64) -> Result<StateVector, PropagationError> {
    if out.iter().any(|z| !z.is_finite()) {
        return Err(PropagationError::NonFinite { t, stream_id });
    }
    let norm = dot(&out, &out).re.sqrt();
    if norm < NORM_COLLAPSE {
        return Err(PropagationError::NormCollapse { t, norm, stream_id });
    }
    for z in &mut out {
        *z /= norm;
    }
    Ok(StateVector::from_vec_unchecked(out))
}

/// State history of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub grid: TimeGrid,
    pub mode: Mode,
    pub seed: u64,
    pub stream_id: u64,
    /// One state per grid point; normalized in nonlinear mode.
    pub states: Vec<StateVector>,
    /// `|psi_t|` before normalization (identically one in nonlinear mode).
    pub norms: Vec<f64>,
}

/// Source of `Obar(t_n, w)` along one trajectory.
///
/// In nonlinear mode the whole past of the shifted noise moves with `t`:
/// `z~*_s(t) = z*_s + int_0^t alpha*(s, u) <L^dag>_u du`, so every past
/// sample drifts at rate `alpha(t, s) x_t` with `x = <L^dag>`. Linear mode
/// passes `x = 0`.
enum Memory<'a> {
    Tracker(ObarTracker<'a>),
    Quadrature {
        table: &'a CoefficientTable,
        history: Vec<C64>,
    },
}

impl Memory<'_> {
    /// `Obar` at the current point, whose noise sample is already recorded.
    fn current(&self) -> Result<CMatrix, CoefficientError> {
        match self {
            Memory::Tracker(t) => Ok(t.obar()),
            Memory::Quadrature { table, history } => assemble_obar_values(table, history, history.len() - 1),
        }
    }

    /// `Obar` at the next point if the noise there were `w_end`.
    fn preview(&self, w: (C64, C64), x: (C64, C64)) -> Result<CMatrix, CoefficientError> {
        match self {
            Memory::Tracker(t) => {
                let mut probe = t.clone();
                probe.advance_drifting(w.0, w.1, x.0, x.1);
                Ok(probe.obar())
            }
            Memory::Quadrature { table, history } => {
                let mut h = history.clone();
                drift_history(table, &mut h, x)?;
                h.push(w.1);
                assemble_obar_values(table, &h, h.len() - 1)
            }
        }
    }

    fn commit(&mut self, w: (C64, C64), x: (C64, C64)) -> Result<(), CoefficientError> {
        match self {
            Memory::Tracker(t) => t.advance_drifting(w.0, w.1, x.0, x.1),
            Memory::Quadrature { table, history } => {
                drift_history(table, history, x)?;
                history.push(w.1);
            }
        }
        Ok(())
    }
}

/// Moves the recorded samples `s <= t_n` by the trapezoid of
/// `int_{t_n}^{t_{n+1}} alpha(u, s) x_u du`.
fn drift_history(table: &CoefficientTable, history: &mut [C64], x: (C64, C64)) -> Result<(), CoefficientError> {
    if x.0 == C64::new(0.0, 0.0) && x.1 == C64::new(0.0, 0.0) {
        return Ok(());
    }
    let grid = table.grid();
    let n = history.len() - 1;
    let (t0, t1) = (grid.time(n), grid.time(n + 1));
    let half = 0.5 * grid.dt();
    for (s, z) in history.iter_mut().enumerate() {
        let ts = grid.time(s);
        let kernel = table.kernel();
        *z += (kernel.alpha(t0, ts)? * x.0 + kernel.alpha(t1, ts)? * x.1) * half;
    }
    Ok(())
}

/// Shared, read-only machinery for many trajectories of one configuration.
#[derive(Debug)]
pub struct Propagator<'a> {
    model: &'a ModelSpec,
    table: &'a CoefficientTable,
    mode: Mode,
    sampler: NoiseSampler,
    series: Option<MemorySeries>,
    minus_i_h: Vec<CMatrix>,
    l: CMatrix,
    ldag: CMatrix,
}

impl<'a> Propagator<'a> {
    pub fn new(model: &'a ModelSpec, table: &'a CoefficientTable, mode: Mode) -> Result<Self, PropagationError> {
        if table.layout() != model.layout() {
            return Err(PropagationError::DimensionMismatch {
                model: model.dim(),
                input: table.layout().dim(),
            });
        }
        let grid = *table.grid();
        let series = match table.route() {
            CoefficientRoute::Closure => Some(MemorySeries::new(model, table)?),
            CoefficientRoute::Quadrature => {
                if table.noise_order() >= 1 && !table.has_kernels() {
                    return Err(CoefficientError::Missing("noise kernels P(t, s)").into());
                }
                None
            }
        };
        let minus_i_h = grid.times().map(|t| model.minus_i_h(t)).collect();
        let l = model.lindblad().clone();
        Ok(Self {
            model,
            table,
            mode,
            sampler: NoiseSampler::new(table.kernel(), grid)?,
            series,
            minus_i_h,
            ldag: l.adjoint(),
            l,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.table.grid()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn sample_noise(&self, seed: u64, stream_id: u64) -> NoiseRealization {
        self.sampler.sample(seed, stream_id)
    }

    fn memory(&self, w0: C64) -> Memory<'_> {
        match &self.series {
            Some(s) => Memory::Tracker(ObarTracker::new(s)),
            None => Memory::Quadrature {
                table: self.table,
                history: vec![w0],
            },
        }
    }

    fn check_initial(&self, psi0: &StateVector) -> Result<(), PropagationError> {
        if psi0.dim() != self.model.dim() {
            return Err(PropagationError::DimensionMismatch {
                model: self.model.dim(),
                input: psi0.dim(),
            });
        }
        let norm = psi0.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(PropagationError::NotNormalized { norm });
        }
        Ok(())
    }

    /// Propagates along `noise`, calling `visit(n, state, norm)` at every grid
    /// point without keeping the history.
    pub fn propagate(
        &self,
        psi0: &StateVector,
        noise: &NoiseRealization,
        mut visit: impl FnMut(usize, &StateVector, f64),
    ) -> Result<(), PropagationError> {
        self.check_initial(psi0)?;
        let grid = *self.grid();
        if noise.grid() != &grid {
            return Err(CoefficientError::GridMismatch {
                table: grid.n_steps(),
                input: noise.grid().n_steps(),
            }
            .into());
        }
        let w = noise.values();
        let dt = grid.dt();
        let stream = noise.stream_id();
        let mut psi = psi0.clone();
        visit(0, &psi, 1.0);
        match self.mode {
            Mode::Linear => {
                let mut memory = self.memory(w[0]);
                let mut obar = memory.current()?;
                for n in 0..grid.n_steps() {
                    let next = memory.preview((w[n], w[n + 1]), (ZERO, ZERO))?;
                    let start = StageInputs {
                        minus_i_h: &self.minus_i_h[n],
                        obar: &obar,
                        z: w[n],
                    };
                    let end = StageInputs {
                        minus_i_h: &self.minus_i_h[n + 1],
                        obar: &next,
                        z: w[n + 1],
                    };
                    let out = heun(psi.amplitudes(), dt, &start, &end, |st, v| {
                        linear_rhs(&self.l, &self.ldag, st, v)
                    });
                    psi = finish_linear(out, grid.time(n + 1), stream)?;
                    memory.commit((w[n], w[n + 1]), (ZERO, ZERO))?;
                    obar = next;
                    visit(n + 1, &psi, psi.norm());
                }
            }
            Mode::Nonlinear => {
                let mut shift = NoiseShift::new(self.table.kernel(), &grid);
                let mut zt = w[0];
                let mut memory = self.memory(zt);
                let mut obar = memory.current()?;
                for n in 0..grid.n_steps() {
                    let x = psi.expectation(&self.ldag);
                    let z_pred = w[n + 1] + shift.predict(x);
                    let obar_pred = memory.preview((zt, z_pred), (x, x))?;
                    let start = StageInputs {
                        minus_i_h: &self.minus_i_h[n],
                        obar: &obar,
                        z: zt,
                    };
                    let end = StageInputs {
                        minus_i_h: &self.minus_i_h[n + 1],
                        obar: &obar_pred,
                        z: z_pred,
                    };
                    let out = heun(psi.amplitudes(), dt, &start, &end, |st, v| {
                        nonlinear_rhs(&self.l, &self.ldag, st, v)
                    });
                    psi = finish_nonlinear(out, grid.time(n + 1), stream)?;
                    let x_next = psi.expectation(&self.ldag);
                    let z_next = w[n + 1] + shift.correct(x_next);
                    memory.commit((zt, z_next), (x, x_next))?;
                    zt = z_next;
                    obar = memory.current()?;
                    visit(n + 1, &psi, 1.0);
                }
            }
        }
        Ok(())
    }

    /// Full history along a given noise realization.
    pub fn run_with_noise(
        &self,
        psi0: &StateVector,
        noise: &NoiseRealization,
    ) -> Result<TrajectoryResult, PropagationError> {
        let len = self.grid().len();
        let mut states = Vec::with_capacity(len);
        let mut norms = Vec::with_capacity(len);
        self.propagate(psi0, noise, |_, s, nrm| {
            states.push(s.clone());
            norms.push(nrm);
        })?;
        Ok(TrajectoryResult {
            grid: *self.grid(),
            mode: self.mode,
            seed: noise.seed(),
            stream_id: noise.stream_id(),
            states,
            norms,
        })
    }

    pub fn run(&self, psi0: &StateVector, seed: u64, stream_id: u64) -> Result<TrajectoryResult, PropagationError> {
        self.run_with_noise(psi0, &self.sample_noise(seed, stream_id))
    }
}

/// Samples one noise realization and propagates `psi0` through it.
pub fn run_trajectory(
    model: &ModelSpec,
    table: &CoefficientTable,
    psi0: &StateVector,
    mode: Mode,
    seed: u64,
    stream_id: u64,
) -> Result<TrajectoryResult, PropagationError> {
    Propagator::new(model, table, mode)?.run(psi0, seed, stream_id)
}
