//! Bath correlation kernels and colored complex Gaussian noise.
//!
//! A realization stores the samples `z*_t` on a [`TimeGrid`]. Statistics are
//! `M[z_t z*_s] = alpha(t, s)` and `M[z_t z_s] = 0`. With `w_n = z*_{t_n}`
//! the covariance of the stored values is `E[w_n conj(w_m)] = alpha(t_m, t_n)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::{C64, ZERO};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid correlation kernel: {0}")]
    InvalidKernel(String),
    #[error("correlation evaluated at negative time (t = {t}, s = {s})")]
    NegativeTime { t: f64, s: f64 },
    #[error("tabulated covariance is not positive semidefinite (pivot {pivot:e} at grid index {index})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },
    #[error("correlation table covers lags up to {available}, grid needs {needed}")]
    TableTooShort { needed: f64, available: f64 },
    #[error("the recursive shift update needs an exponential kernel; use NoiseShift for tabulated kernels")]
    NeedsHistory,
    #[error("noise realization has {got} samples, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Uniform grid `t_n = n * t_max / n_steps`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self, NoiseError> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(NoiseError::InvalidGrid(format!(
                "t_max must be positive and finite, got {t_max}"
            )));
        }
        if n_steps == 0 {
            return Err(NoiseError::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_max * n as f64 / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|n| self.time(n))
    }

    /// The same interval with `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Self {
        Self {
            t_max: self.t_max,
            n_steps: self.n_steps * factor.max(1),
        }
    }

    /// Every `stride`-th point of this grid, if `stride` divides `n_steps`.
    pub fn coarsen(&self, stride: usize) -> Option<Self> {
        (stride > 0 && self.n_steps % stride == 0).then(|| Self {
            t_max: self.t_max,
            n_steps: self.n_steps / stride,
        })
    }

    /// Nearest grid index to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let n = (t / self.dt()).round();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.n_steps)
        }
    }
}

/// Stationary correlation table `alpha(tau)` on `tau = k * lag_step`,
/// interpolated linearly and zero beyond the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    lag_step: f64,
    values: Vec<C64>,
}

impl TabulatedKernel {
    pub fn new(lag_step: f64, values: Vec<C64>) -> Result<Self, NoiseError> {
        if !(lag_step > 0.0) || !lag_step.is_finite() {
            return Err(NoiseError::InvalidKernel(format!(
                "table lag step must be positive, got {lag_step}"
            )));
        }
        if values.len() < 2 {
            return Err(NoiseError::InvalidKernel(
                "correlation table needs at least two entries".into(),
            ));
        }
        if values.iter().any(|z| !z.is_finite()) {
            return Err(NoiseError::InvalidKernel("non-finite table entry".into()));
        }
        let a0 = values[0];
        if a0.im.abs() > 1e-12 * a0.norm().max(1.0) || a0.re < 0.0 {
            return Err(NoiseError::InvalidKernel(format!(
                "alpha(t, t) must be real and non-negative, got {a0}"
            )));
        }
        let mut values = values;
        values[0] = C64::new(a0.re, 0.0);
        Ok(Self { lag_step, values })
    }

    /// Tabulates an exponential kernel; handy for checking the tabulated
    /// code paths against the closed form.
    pub fn from_fn(lag_step: f64, n: usize, f: impl Fn(f64) -> C64) -> Result<Self, NoiseError> {
        Self::new(lag_step, (0..n).map(|k| f(k as f64 * lag_step)).collect())
    }

    pub fn lag_step(&self) -> f64 {
        self.lag_step
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn max_lag(&self) -> f64 {
        self.lag_step * (self.values.len() - 1) as f64
    }

    fn at(&self, tau: f64) -> C64 {
        let last = self.values.len() - 1;
        let x = tau / self.lag_step;
        if x >= last as f64 {
            // Grid times carry rounding error; treat a hair past the end as the end.
            return if x <= last as f64 * (1.0 + 1e-9) {
                self.values[last]
            } else {
                ZERO
            };
        }
        let k = x.floor() as usize;
        let frac = x - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

/// Bath correlation function `alpha(t, s)` with `alpha(s, t) = conj(alpha(t, s))`.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationKernel {
    /// `alpha(t, s) = (gamma_rate * gamma / 2) exp(-gamma |t - s|)`.
    Exponential {
        gamma_rate: f64,
        gamma: f64,
    },
    Tabulated(TabulatedKernel),
}

impl CorrelationKernel {
    pub fn exponential(gamma_rate: f64, gamma: f64) -> Result<Self, NoiseError> {
        if !(gamma_rate >= 0.0) || !gamma_rate.is_finite() {
            return Err(NoiseError::InvalidKernel(format!(
                "Gamma must be non-negative and finite, got {gamma_rate}"
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(NoiseError::InvalidKernel(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self::Exponential { gamma_rate, gamma })
    }

    pub fn tabulated(table: TabulatedKernel) -> Self {
        Self::Tabulated(table)
    }

    pub fn alpha(&self, t: f64, s: f64) -> Result<C64, NoiseError> {
        if t < 0.0 || s < 0.0 || !t.is_finite() || !s.is_finite() {
            return Err(NoiseError::NegativeTime { t, s });
        }
        Ok(if t >= s {
            self.lag(t - s)
        } else {
            self.lag(s - t).conj()
        })
    }

    /// `alpha(t, s)` for `t - s = tau >= 0`.
    pub(crate) fn lag(&self, tau: f64) -> C64 {
        match self {
            Self::Exponential { gamma_rate, gamma } => C64::new(0.5 * gamma_rate * gamma * (-gamma * tau).exp(), 0.0),
            Self::Tabulated(t) => t.at(tau),
        }
    }

    /// `(gamma, Gamma * gamma / 2)` for the exponential kernel.
    pub fn exponential_params(&self) -> Option<(f64, f64)> {
        match self {
            Self::Exponential { gamma_rate, gamma } => Some((*gamma, 0.5 * gamma_rate * gamma)),
            Self::Tabulated(_) => None,
        }
    }

    /// Fails if a tabulated kernel does not reach the end of `grid`.
    pub fn check_covers(&self, grid: &TimeGrid) -> Result<(), NoiseError> {
        if let Self::Tabulated(t) = self {
            if t.max_lag() + 1e-12 * grid.t_max() < grid.t_max() {
                return Err(NoiseError::TableTooShort {
                    needed: grid.t_max(),
                    available: t.max_lag(),
                });
            }
        }
        Ok(())
    }
}

/// Samples `z*_{t_n}` for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    grid: TimeGrid,
    values: Vec<C64>,
    seed: u64,
    stream_id: u64,
}

impl NoiseRealization {
    /// Wraps externally supplied samples; seed and stream are recorded as 0.
    pub fn from_values(grid: TimeGrid, values: Vec<C64>) -> Result<Self, NoiseError> {
        if values.len() != grid.len() {
            return Err(NoiseError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            values,
            seed: 0,
            stream_id: 0,
        })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![ZERO; grid.len()],
            seed: 0,
            stream_id: 0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

/// Random stream for trajectory `stream_id` of a run seeded with `seed`.
/// ChaCha20 streams are independent of each other and of scheduling order.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// `(x + i y) / sqrt(2)` with independent standard normals, so `E|xi|^2 = 1`.
pub fn circular_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Precomputed sampler for one (kernel, grid) pair.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    grid: TimeGrid,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    /// Exact stationary AR(1) recursion.
    Ar1 { decay: f64, drive: f64, stationary: f64 },
    /// Lower Cholesky factor of the grid covariance, row-major.
    Cholesky { lower: Vec<C64> },
}

impl NoiseSampler {
    pub fn new(kernel: &CorrelationKernel, grid: TimeGrid) -> Result<Self, NoiseError> {
        let kind = match kernel {
            CorrelationKernel::Exponential { gamma, .. } => {
                let (_, c) = kernel.exponential_params().expect("exponential");
                let decay = (-gamma * grid.dt()).exp();
                SamplerKind::Ar1 {
                    decay,
                    drive: (c * -(-2.0 * gamma * grid.dt()).exp_m1()).sqrt(),
                    stationary: c.sqrt(),
                }
            }
            CorrelationKernel::Tabulated(_) => {
                kernel.check_covers(&grid)?;
                SamplerKind::Cholesky {
                    lower: cholesky_covariance(kernel, &grid)?,
                }
            }
        };
        Ok(Self { grid, kind })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, seed: u64, stream_id: u64) -> NoiseRealization {
        let mut rng = stream_rng(seed, stream_id);
        let n = self.grid.len();
        let values = match &self.kind {
            SamplerKind::Ar1 {
                decay,
                drive,
                stationary,
            } => {
                let mut out = Vec::with_capacity(n);
                let mut z = circular_normal(&mut rng) * *stationary;
                out.push(z);
                for _ in 1..n {
                    z = z * *decay + circular_normal(&mut rng) * *drive;
                    out.push(z);
                }
                out
            }
            SamplerKind::Cholesky { lower } => {
                let xi: Vec<C64> = (0..n).map(|_| circular_normal(&mut rng)).collect();
                (0..n)
                    .map(|r| lower[r * n..r * n + r + 1].iter().zip(&xi).map(|(&l, &x)| l * x).sum())
                    .collect()
            }
        };
        NoiseRealization {
            grid: self.grid,
            values,
            seed,
            stream_id,
        }
    }
}

/// One realization; builds a throwaway [`NoiseSampler`].
pub fn sample_noise(
    kernel: &CorrelationKernel,
    grid: TimeGrid,
    seed: u64,
    stream_id: u64,
) -> Result<NoiseRealization, NoiseError> {
    Ok(NoiseSampler::new(kernel, grid)?.sample(seed, stream_id))
}

fn cholesky_covariance(kernel: &CorrelationKernel, grid: &TimeGrid) -> Result<Vec<C64>, NoiseError> {
    let n = grid.len();
    let dt = grid.dt();
    // C[r][c] = E[w_r conj(w_c)] = alpha(t_c, t_r).
    let cov = |r: usize, c: usize| -> C64 {
        if c >= r {
            kernel.lag((c - r) as f64 * dt)
        } else {
            kernel.lag((r - c) as f64 * dt).conj()
        }
    };
    let max_diag = kernel.lag(0.0).re;
    let jitter = 1e-12 * max_diag;
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = cov(j, j).re + jitter;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if d < 0.0 {
            return Err(NoiseError::NotPositiveSemidefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut acc = cov(i, j);
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = if ljj > 0.0 { acc / ljj } else { ZERO };
        }
    }
    Ok(l)
}

/// Single step of the shift memory for the exponential kernel.
///
/// Given `I(t) = int_0^t alpha*(t, s) x_s ds` and `x_t = <L^dagger>_t`,
/// returns `(z*_t + I(t), I(t + dt))`. The new memory treats `x` as constant
/// over the step and integrates the exponential weight exactly:
/// `I(t + dt) = e^{-gamma dt} I(t) + c x_t (1 - e^{-gamma dt}) / gamma`.
pub fn shifted_noise_update(
    memory: C64,
    z_raw: C64,
    expect_ldag: C64,
    kernel: &CorrelationKernel,
    dt: f64,
) -> Result<(C64, C64), NoiseError> {
    let (gamma, c) = kernel.exponential_params().ok_or(NoiseError::NeedsHistory)?;
    let decay = (-gamma * dt).exp();
    let next = memory * decay + expect_ldag * (c * -(-gamma * dt).exp_m1() / gamma);
    Ok((z_raw + memory, next))
}

/// Shift memory `I(t_n)` maintained along a nonlinear trajectory with a
/// predictor/corrector pair per step.
///
/// `predict(x_n)` estimates `I(t_{n+1})` holding `x` constant over the step;
/// `correct(x_{n+1})` replaces it with the piecewise-linear value once the
/// end-of-step expectation is known. Tabulated kernels keep the full history
/// and cost O(n) per step.
#[derive(Debug, Clone)]
pub struct NoiseShift {
    kind: ShiftKind,
    current: C64,
    predicted: C64,
}

#[derive(Debug, Clone)]
enum ShiftKind {
    Exponential {
        decay: f64,
        c: f64,
        w_const: f64,
        w_start: f64,
        w_end: f64,
        last_x: C64,
    },
    History {
        kernel: CorrelationKernel,
        dt: f64,
        history: Vec<C64>,
    },
}

impl NoiseShift {
    pub fn new(kernel: &CorrelationKernel, grid: &TimeGrid) -> Self {
        let dt = grid.dt();
        let kind = match kernel.exponential_params() {
            Some((gamma, c)) => {
                let x = gamma * dt;
                let e0 = -(-x).exp_m1() / gamma;
                let e1 = one_minus_exp_poly(x) / (gamma * gamma);
                ShiftKind::Exponential {
                    decay: (-x).exp(),
                    c,
                    w_const: e0,
                    w_start: e1 / dt,
                    w_end: e0 - e1 / dt,
                    last_x: ZERO,
                }
            }
            None => ShiftKind::History {
                kernel: kernel.clone(),
                dt,
                history: Vec::with_capacity(grid.len()),
            },
        };
        Self {
            kind,
            current: ZERO,
            predicted: ZERO,
        }
    }

    /// `I(t_n)` after the last correction.
    pub fn current(&self) -> C64 {
        self.current
    }

    /// Records `x_n` and returns the predicted `I(t_{n+1})`.
    pub fn predict(&mut self, x_n: C64) -> C64 {
        self.predicted = match &mut self.kind {
            ShiftKind::Exponential {
                decay,
                c,
                w_const,
                last_x,
                ..
            } => {
                *last_x = x_n;
                self.current * *decay + x_n * (*c * *w_const)
            }
            ShiftKind::History { kernel, dt, history } => {
                history.push(x_n);
                history_integral(kernel, *dt, history, x_n)
            }
        };
        self.predicted
    }

    /// Finalizes `I(t_{n+1})` from the end-of-step `x_{n+1}`.
    pub fn correct(&mut self, x_next: C64) -> C64 {
        self.current = match &self.kind {
            ShiftKind::Exponential {
                decay,
                c,
                w_start,
                w_end,
                last_x,
                ..
            } => self.current * *decay + (*last_x * *w_start + x_next * *w_end) * *c,
            ShiftKind::History { kernel, dt, history } => history_integral(kernel, *dt, history, x_next),
        };
        self.current
    }
}

/// Trapezoid `int_0^{t_{n+1}} alpha*(t_{n+1}, s) x_s ds` over `history`
/// (`x_0..x_n`) plus the end value `x_end`.
fn history_integral(kernel: &CorrelationKernel, dt: f64, history: &[C64], x_end: C64) -> C64 {
    let n1 = history.len();
    let mut acc = x_end * kernel.lag(0.0).conj() * 0.5;
    for (m, &x) in history.iter().enumerate() {
        let w = if m == 0 { 0.5 } else { 1.0 };
        acc += x * kernel.lag((n1 - m) as f64 * dt).conj() * w;
    }
    acc * dt
}

/// `1 - e^{-x}(1 + x)`, accurate for small `x`.
fn one_minus_exp_poly(x: f64) -> f64 {
    if x < 0.05 {
        // sum_{k>=2} (-1)^k (k-1) x^k / k!
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for k in 2..12 {
            sum += term * (k - 1) as f64;
            term *= -x / (k + 1) as f64;
        }
        sum
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    }
}

/// Sample moments at one probe pair `(t, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceProbe {
    pub t: f64,
    pub s: f64,
    pub analytic: C64,
    /// Sample mean of `z_t z*_s`.
    pub sample: C64,
    pub stderr: f64,
    /// Sample mean of `z_t z_s`, which should vanish.
    pub pseudo: C64,
    pub pseudo_stderr: f64,
}

impl CovarianceProbe {
    /// Deviation of the covariance in standard errors.
    pub fn z(&self) -> f64 {
        sigmas(self.sample - self.analytic, self.stderr)
    }

    pub fn pseudo_z(&self) -> f64 {
        sigmas(self.pseudo, self.pseudo_stderr)
    }
}

fn sigmas(d: C64, se: f64) -> f64 {
    if se > 0.0 {
        d.norm() / se
    } else if d.norm() == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub realizations: usize,
    pub probes: Vec<CovarianceProbe>,
}

impl CovarianceReport {
    pub fn max_z(&self) -> f64 {
        self.probes.iter().map(CovarianceProbe::z).fold(0.0, f64::max)
    }

    pub fn max_pseudo_z(&self) -> f64 {
        self.probes.iter().map(CovarianceProbe::pseudo_z).fold(0.0, f64::max)
    }

    /// Both statistics within `threshold` standard errors at every probe.
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_z() < threshold && self.max_pseudo_z() < threshold
    }
}

/// Compares sample moments of streams `0..realizations` with `alpha` on a
/// `probes x probes` subgrid of evenly spaced time indices.
pub fn covariance_check(
    kernel: &CorrelationKernel,
    grid: TimeGrid,
    realizations: usize,
    seed: u64,
    probes: usize,
) -> Result<CovarianceReport, NoiseError> {
    if realizations < 2 || probes == 0 {
        return Err(NoiseError::InvalidGrid(
            "covariance check needs at least two realizations and one probe".into(),
        ));
    }
    let sampler = NoiseSampler::new(kernel, grid)?;
    let k = probes.min(grid.len());
    let idx: Vec<usize> = (0..k)
        .map(|i| if k == 1 { 0 } else { i * grid.n_steps() / (k - 1) })
        .collect();
    let pairs = k * k;
    // Running sums of x and |x|^2 components for covariance and pseudo-covariance.
    let mut sum = vec![[0.0f64; 4]; pairs];
    let mut sum_p = vec![[0.0f64; 4]; pairs];
    for stream in 0..realizations {
        let w = sampler.sample(seed, stream as u64);
        let v = w.values();
        for (a, &i) in idx.iter().enumerate() {
            let zt = v[i].conj();
            for (b, &j) in idx.iter().enumerate() {
                let zs = v[j].conj();
                let c = zt * zs.conj();
                let p = zt * zs;
                let e = &mut sum[a * k + b];
                e[0] += c.re;
                e[1] += c.im;
                e[2] += c.re * c.re;
                e[3] += c.im * c.im;
                let e = &mut sum_p[a * k + b];
                e[0] += p.re;
                e[1] += p.im;
                e[2] += p.re * p.re;
                e[3] += p.im * p.im;
            }
        }
    }
    let n = realizations as f64;
    let moments = |e: &[f64; 4]| {
        let mean = C64::new(e[0] / n, e[1] / n);
        let var_re = (e[2] / n - mean.re * mean.re) * n / (n - 1.0);
        let var_im = (e[3] / n - mean.im * mean.im) * n / (n - 1.0);
        (mean, ((var_re + var_im).max(0.0) / n).sqrt())
    };
    let mut out = Vec::with_capacity(pairs);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let (t, s) = (grid.time(i), grid.time(j));
            let (sample, stderr) = moments(&sum[a * k + b]);
            let (pseudo, pseudo_stderr) = moments(&sum_p[a * k + b]);
            out.push(CovarianceProbe {
                t,
                s,
                analytic: kernel.alpha(t, s)?,
                sample,
                stderr,
                pseudo,
                pseudo_stderr,
            });
        }
    }
    Ok(CovarianceReport {
        realizations,
        probes: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_closed_form() {
        let k = CorrelationKernel::exponential(1.0, 2.0).unwrap();
        assert_eq!(k.alpha(0.7, 0.7).unwrap(), C64::new(1.0, 0.0));
        let k = CorrelationKernel::exponential(1.0, 1.0).unwrap();
        let a = k.alpha(2.0, 1.0).unwrap();
        assert!((a.re - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert!(k.alpha(-0.1, 0.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_conjugates() {
        let t = TabulatedKernel::new(0.5, vec![C64::new(1.0, 0.0), C64::new(0.5, 0.5)]).unwrap();
        let k = CorrelationKernel::tabulated(t);
        let a = k.alpha(0.25, 0.0).unwrap();
        assert!((a - C64::new(0.75, 0.25)).norm() < 1e-15);
        assert_eq!(k.alpha(0.0, 0.25).unwrap(), a.conj());
        assert_eq!(k.alpha(2.0, 0.0).unwrap(), ZERO);
        assert!(TabulatedKernel::new(0.5, vec![C64::new(0.0, 1.0), ZERO]).is_err());
    }

    #[test]
    fn grid_points() {
        let g = TimeGrid::new(10.0, 200).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g.time(200), 10.0);
        assert_eq!(g.index_of(5.0), 100);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert_eq!(g.coarsen(4).unwrap().n_steps(), 50);
        assert!(g.coarsen(3).is_none());
    }

    #[test]
    fn same_stream_same_samples() {
        let k = CorrelationKernel::exponential(1.0, 0.5).unwrap();
        let g = TimeGrid::new(2.0, 40).unwrap();
        let a = sample_noise(&k, g, 7, 3).unwrap();
        let b = sample_noise(&k, g, 7, 3).unwrap();
        let c = sample_noise(&k, g, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn zero_rate_gives_zero_noise() {
        let k = CorrelationKernel::exponential(0.0, 0.5).unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(sample_noise(&k, g, 1, 1).unwrap().values().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let g = TimeGrid::new(1.0, 6).unwrap();
        let k = CorrelationKernel::tabulated(
            TabulatedKernel::from_fn(g.dt(), 7, |tau| C64::from_polar(0.3 * (-0.8 * tau).exp(), 1.3 * tau)).unwrap(),
        );
        let l = cholesky_covariance(&k, &g).unwrap();
        let n = g.len();
        for r in 0..n {
            for c in 0..n {
                let prod: C64 = (0..n).map(|m| l[r * n + m] * l[c * n + m].conj()).sum();
                let expect = k.alpha(g.time(c), g.time(r)).unwrap();
                let tol = if r == c { 1e-12 } else { 1e-14 };
                assert!((prod - expect).norm() < tol, "{r} {c}");
            }
        }
    }

    #[test]
    fn shift_recursion_constant_input() {
        // x_s = c0 constant: I(t) = c0 (Gamma/2)(1 - e^{-gamma t}).
        let (gr, gamma) = (1.3, 0.7);
        let k = CorrelationKernel::exponential(gr, gamma).unwrap();
        let g = TimeGrid::new(4.0, 80).unwrap();
        let c0 = C64::new(0.2, -0.4);
        let mut mem = ZERO;
        let mut shift = NoiseShift::new(&k, &g);
        for n in 0..g.n_steps() {
            let (zs, next) = shifted_noise_update(mem, ZERO, c0, &k, g.dt()).unwrap();
            assert_eq!(zs, mem);
            mem = next;
            shift.predict(c0);
            shift.correct(c0);
            let exact = c0 * (0.5 * gr * -(-gamma * g.time(n + 1)).exp_m1());
            assert!((mem - exact).norm() < 1e-14);
            assert!((shift.current() - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn shift_tabulated_matches_exponential() {
        let k = CorrelationKernel::exponential(1.0, 0.9).unwrap();
        let g = TimeGrid::new(2.0, 400).unwrap();
        let tab = CorrelationKernel::tabulated(TabulatedKernel::from_fn(g.dt(), g.len(), |tau| k.lag(tau)).unwrap());
        let x = |t: f64| C64::new(t.sin(), 0.3 * t);
        let mut a = NoiseShift::new(&k, &g);
        let mut b = NoiseShift::new(&tab, &g);
        for n in 0..g.n_steps() {
            a.predict(x(g.time(n)));
            b.predict(x(g.time(n)));
            a.correct(x(g.time(n + 1)));
            b.correct(x(g.time(n + 1)));
        }
        // Trapezoid vs exact-weight quadrature differ at O(dt^2).
        assert!((a.current() - b.current()).norm() < 1e-5);
    }

    #[test]
    fn small_argument_series() {
        for &x in &[0.02f64, 0.04, 0.05, 0.3] {
            let direct = -(-x).exp_m1() - x * (-x).exp();
            assert!((one_minus_exp_poly(x) - direct).abs() / direct < 1e-11, "x={x}");
        }
        let x = 1e-6f64;
        let leading = x * x / 2.0 - x * x * x / 3.0;
        assert!((one_minus_exp_poly(x) - leading).abs() / leading < 1e-12);
    }
}
