//! Trajectory ensembles and the observables computed from them.
//!
//! Trajectories are run in fixed chunks of [`CHUNK`] consecutive stream ids.
//! Each chunk accumulates Welford moments of the projector entries; chunks
//! are then merged in stream order, so results do not depend on the number
//! of workers. Chunks are also dealt round-robin into at most [`GROUPS`]
//! groups whose sums feed delete-a-group jackknife errors for nonlinear
//! functionals such as the entropy.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::linalg::{CMatrix, DensityMatrix, LinalgError, StateVector, C64, ZERO};
use crate::noise::TimeGrid;
use crate::propagator::{Mode, PropagationError, Propagator, TrajectoryResult};

/// Trajectories per work unit.
pub const CHUNK: usize = 8;
/// Maximum number of jackknife groups.
pub const GROUPS: usize = 32;
/// Chunks run concurrently before their results are merged.
const WAVE: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one trajectory")]
    Empty,
    #[error("trajectory {index} has a different grid or dimension")]
    Mismatch { index: usize },
    #[error("trajectories mix linear and nonlinear mode")]
    MixedModes,
    #[error("index ({i}, {j}) outside a {dim}-level density matrix")]
    IndexOutOfRange { i: usize, j: usize, dim: usize },
    #[error("density matrix has eigenvalue {value:e}, below the -1e-6 floor")]
    Unphysical { value: f64 },
    #[error("could not build a worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    E,
    Two,
}

impl LogBase {
    fn ln_scale(self) -> f64 {
        match self {
            LogBase::E => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        }
    }
}

/// A real observable along the grid with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Welford moments of the upper-triangle projector entries at every grid
/// point, plus the squared norm.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    count: u64,
    mean: Vec<C64>,
    m2_re: Vec<f64>,
    m2_im: Vec<f64>,
    co: Vec<f64>,
    norm_mean: Vec<f64>,
    norm_m2: Vec<f64>,
}

impl Moments {
    fn new(points: usize, entries: usize) -> Self {
        let n = points * entries;
        Self {
            count: 0,
            mean: vec![ZERO; n],
            m2_re: vec![0.0; n],
            m2_im: vec![0.0; n],
            co: vec![0.0; n],
            norm_mean: vec![0.0; points],
            norm_m2: vec![0.0; points],
        }
    }

    /// Adds point `n` of the trajectory currently being recorded.
    fn push(&mut self, pairs: &[(usize, usize)], n: usize, psi: &StateVector, norm: f64) {
        let k = (self.count + 1) as f64;
        let a = psi.amplitudes();
        let base = n * pairs.len();
        for (e, &(i, j)) in pairs.iter().enumerate() {
            let x = if i == j {
                C64::new(a[i].norm_sqr(), 0.0)
            } else {
                a[i] * a[j].conj()
            };
            let at = base + e;
            let d = x - self.mean[at];
            self.mean[at] += d / k;
            let d2 = x - self.mean[at];
            self.m2_re[at] += d.re * d2.re;
            self.m2_im[at] += d.im * d2.im;
            self.co[at] += d.re * d2.im;
        }
        let x = norm * norm;
        let d = x - self.norm_mean[n];
        self.norm_mean[n] += d / k;
        self.norm_m2[n] += d * (x - self.norm_mean[n]);
    }

    fn finish_trajectory(&mut self) {
        self.count += 1;
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let w = na * nb / n;
        for at in 0..self.mean.len() {
            let d = other.mean[at] - self.mean[at];
            self.mean[at] += d * (nb / n);
            self.m2_re[at] += other.m2_re[at] + d.re * d.re * w;
            self.m2_im[at] += other.m2_im[at] + d.im * d.im * w;
            self.co[at] += other.co[at] + d.re * d.im * w;
        }
        for p in 0..self.norm_mean.len() {
            let d = other.norm_mean[p] - self.norm_mean[p];
            self.norm_mean[p] += d * (nb / n);
            self.norm_m2[p] += other.norm_m2[p] + d * d * w;
        }
        self.count += other.count;
    }
}

fn upper_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect()
}

/// Ordered reduction of chunk moments with jackknife group sums.
#[derive(Debug, Clone)]
struct Reducer {
    total: Moments,
    chunks_seen: usize,
    groups: usize,
    group_sums: Vec<Vec<C64>>,
    group_counts: Vec<u64>,
}

impl Reducer {
    fn new(points: usize, entries: usize, chunks: usize) -> Self {
        let groups = chunks.clamp(1, GROUPS);
        Self {
            total: Moments::new(points, entries),
            chunks_seen: 0,
            groups,
            group_sums: vec![vec![ZERO; points * entries]; groups],
            group_counts: vec![0; groups],
        }
    }

    fn add_chunk(&mut self, chunk: &Moments) {
        let g = self.chunks_seen % self.groups;
        let k = chunk.count as f64;
        for (s, m) in self.group_sums[g].iter_mut().zip(&chunk.mean) {
            *s += m * k;
        }
        self.group_counts[g] += chunk.count;
        self.total.merge(chunk);
        self.chunks_seen += 1;
    }
}

/// Ensemble averages on the trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub grid: TimeGrid,
    pub mode: Mode,
    pub n_trajectories: usize,
    /// Hex SHA-256 of the run description, seed, count, mode and grid.
    pub config_digest: String,
    dim: usize,
    pairs: Vec<(usize, usize)>,
    moments: Moments,
    group_sums: Vec<Vec<C64>>,
    group_counts: Vec<u64>,
}

impl EnsembleResult {
    fn from_reducer(grid: TimeGrid, mode: Mode, dim: usize, r: Reducer, config_digest: String) -> Self {
        Self {
            grid,
            mode,
            n_trajectories: r.total.count as usize,
            config_digest,
            dim,
            pairs: upper_pairs(dim),
            moments: r.total,
            group_sums: r.group_sums,
            group_counts: r.group_counts,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn at(&self, n: usize, i: usize, j: usize) -> usize {
        let (a, b) = (i.min(j), i.max(j));
        // Rows 0..a of the upper triangle hold dim + (dim - 1) + ... entries.
        n * self.pairs.len() + a * self.dim - a * a.saturating_sub(1) / 2 + (b - a)
    }

    fn check(&self, i: usize, j: usize) -> Result<(), EnsembleError> {
        if i >= self.dim || j >= self.dim {
            return Err(EnsembleError::IndexOutOfRange { i, j, dim: self.dim });
        }
        Ok(())
    }

    /// `M[|psi><psi|]` at grid point `n`, Hermitian by construction.
    pub fn rho(&self, n: usize) -> DensityMatrix {
        let d = self.dim;
        let base = n * self.pairs.len();
        let mut m = CMatrix::zeros(d, d);
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            let v = self.moments.mean[base + e];
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        DensityMatrix::from_matrix_unchecked(m)
    }

    pub fn rho_series(&self) -> Vec<DensityMatrix> {
        (0..self.grid.len()).map(|n| self.rho(n)).collect()
    }

    fn variances(&self, at: usize) -> (f64, f64, f64) {
        let n = self.moments.count as f64;
        if n < 2.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = n * (n - 1.0);
        (
            self.moments.m2_re[at] / s,
            self.moments.m2_im[at] / s,
            self.moments.co[at] / s,
        )
    }

    /// Standard error of `rho_ij` at point `n`: `sqrt(Var Re + Var Im)` of the mean.
    pub fn stderr(&self, n: usize, i: usize, j: usize) -> f64 {
        let (vr, vi, _) = self.variances(self.at(n, i, j));
        (vr + vi).sqrt()
    }

    /// Entrywise standard errors at point `n`.
    pub fn stderr_matrix(&self, n: usize) -> Vec<f64> {
        let d = self.dim;
        (0..d * d).map(|k| self.stderr(n, k / d, k % d)).collect()
    }

    /// `M[|psi_t|^2]` with its standard error (identically one in nonlinear mode).
    pub fn norm_sqr(&self, n: usize) -> (f64, f64) {
        let c = self.moments.count as f64;
        let se = if c < 2.0 {
            0.0
        } else {
            (self.moments.norm_m2[n] / (c * (c - 1.0))).sqrt()
        };
        (self.moments.norm_mean[n], se)
    }

    pub fn population_series(&self, i: usize) -> Result<ObservableSeries, EnsembleError> {
        self.check(i, i)?;
        let (values, stderr) = (0..self.grid.len())
            .map(|n| {
                let at = self.at(n, i, i);
                (self.moments.mean[at].re, self.variances(at).0.sqrt())
            })
            .unzip();
        Ok(ObservableSeries {
            name: format!("rho_{}{}", i + 1, i + 1),
            values,
            stderr,
        })
    }

    /// `|rho_ij|` with a delta-method standard error.
    pub fn coherence_series(&self, i: usize, j: usize) -> Result<ObservableSeries, EnsembleError> {
        self.check(i, j)?;
        let (values, stderr) = (0..self.grid.len())
            .map(|n| {
                let at = self.at(n, i, j);
                let mu = self.moments.mean[at];
                let (vr, vi, c) = self.variances(at);
                let r = mu.norm();
                let var = if r > 0.0 {
                    (mu.re * mu.re * vr + 2.0 * mu.re * mu.im * c + mu.im * mu.im * vi) / (r * r)
                } else {
                    vr + vi
                };
                (r, var.max(0.0).sqrt())
            })
            .unzip();
        Ok(ObservableSeries {
            name: format!("coherence_{}{}", i + 1, j + 1),
            values,
            stderr,
        })
    }

    /// `rho_ij` with the group `g` left out.
    fn replicate(&self, n: usize, g: usize) -> Option<DensityMatrix> {
        let rest = self.moments.count - self.group_counts[g];
        if rest == 0 {
            return None;
        }
        let d = self.dim;
        let base = n * self.pairs.len();
        let total = self.moments.count as f64;
        let mut m = CMatrix::zeros(d, d);
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            let v = (self.moments.mean[base + e] * total - self.group_sums[g][base + e]) / rest as f64;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        Some(DensityMatrix::from_matrix_unchecked(m))
    }

    /// Von Neumann entropy of `rho / tr rho` with a jackknife standard error.
    /// Also returns how many slightly negative eigenvalues were clamped.
    pub fn entropy_series(&self, base: LogBase) -> Result<(ObservableSeries, usize), EnsembleError> {
        let groups = self.group_counts.iter().filter(|&&c| c > 0).count();
        let mut clamped = 0;
        let mut values = Vec::with_capacity(self.grid.len());
        let mut stderr = Vec::with_capacity(self.grid.len());
        for n in 0..self.grid.len() {
            let (s, c) = entropy_counted(&self.rho(n), base)?;
            clamped += c;
            values.push(s);
            let mut reps = Vec::with_capacity(groups);
            if groups >= 2 {
                for g in 0..self.group_counts.len() {
                    if self.group_counts[g] == 0 {
                        continue;
                    }
                    if let Some(r) = self.replicate(n, g) {
                        reps.push(entropy_counted(&r, base)?.0);
                    }
                }
            }
            stderr.push(jackknife_spread(&reps));
        }
        Ok((
            ObservableSeries {
                name: "entropy".into(),
                values,
                stderr,
            },
            clamped,
        ))
    }

    /// Value and jackknife standard error of any functional of the `rho`
    /// series. `f` receives a lookup from grid index to `rho`; the replicates
    /// leave out one chunk group each, so quantities that combine several
    /// times (a rise between two points, say) get errors that respect the
    /// correlation between those times.
    pub fn jackknife<F>(&self, f: F) -> (f64, f64)
    where
        F: Fn(&dyn Fn(usize) -> DensityMatrix) -> f64,
    {
        let value = f(&|n| self.rho(n));
        let groups = self.group_counts.iter().filter(|&&c| c > 0).count();
        let mut reps = Vec::with_capacity(groups);
        if groups >= 2 {
            for g in 0..self.group_counts.len() {
                if self.group_counts[g] == 0 || self.group_counts[g] == self.moments.count {
                    continue;
                }
                reps.push(f(&|n| self.replicate(n, g).expect("group leaves trajectories")));
            }
        }
        (value, jackknife_spread(&reps))
    }

    pub fn trace_series(&self) -> ObservableSeries {
        let (values, stderr) = (0..self.grid.len()).map(|n| self.norm_sqr(n)).unzip();
        ObservableSeries {
            name: "trace".into(),
            values,
            stderr,
        }
    }
}

fn jackknife_spread(reps: &[f64]) -> f64 {
    if reps.len() < 2 {
        return 0.0;
    }
    let k = reps.len() as f64;
    let mean = reps.iter().sum::<f64>() / k;
    ((k - 1.0) / k * reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>()).sqrt()
}

/// `|rho_ij|`.
pub fn coherence(rho: &DensityMatrix, i: usize, j: usize) -> Result<f64, EnsembleError> {
    let dim = rho.dim();
    if i >= dim || j >= dim {
        return Err(EnsembleError::IndexOutOfRange { i, j, dim });
    }
    Ok(rho.entry(i, j).norm())
}

/// Real parts of the diagonal.
pub fn populations(rho: &DensityMatrix) -> Vec<f64> {
    rho.populations()
}

fn entropy_counted(rho: &DensityMatrix, base: LogBase) -> Result<(f64, usize), EnsembleError> {
    let tr = rho.trace().re;
    let mut vals = rho.eigvals()?;
    if tr > 0.0 && tr.is_finite() {
        for v in &mut vals {
            *v /= tr;
        }
    }
    let mut clamped = 0;
    let mut s = 0.0;
    for v in vals {
        if v < -1e-6 {
            return Err(EnsembleError::Unphysical { value: v });
        }
        if v < -1e-9 {
            clamped += 1;
        }
        if v > 0.0 {
            s -= v * v.ln();
        }
    }
    Ok((s / base.ln_scale(), clamped))
}

/// `-tr(rho log rho)` of `rho / tr rho`. Eigenvalues in `[-1e-6, 0)` are
/// clamped to zero; anything more negative is an error.
pub fn von_neumann_entropy(rho: &DensityMatrix, base: LogBase) -> Result<f64, EnsembleError> {
    Ok(entropy_counted(rho, base)?.0)
}

/// Plain mean of stored trajectories, reduced exactly as [`run_ensemble`]
/// reduces streams `0..n`.
pub fn average_density(trajectories: &[TrajectoryResult]) -> Result<EnsembleResult, EnsembleError> {
    let first = trajectories.first().ok_or(EnsembleError::Empty)?;
    let grid = first.grid;
    let dim = first.states[0].dim();
    for (index, t) in trajectories.iter().enumerate() {
        if t.grid != grid || t.states.len() != grid.len() || t.states.iter().any(|s| s.dim() != dim) {
            return Err(EnsembleError::Mismatch { index });
        }
        if t.mode != first.mode {
            return Err(EnsembleError::MixedModes);
        }
    }
    let pairs = upper_pairs(dim);
    let chunks = trajectories.len().div_ceil(CHUNK);
    let mut reducer = Reducer::new(grid.len(), pairs.len(), chunks);
    for chunk in trajectories.chunks(CHUNK) {
        let mut m = Moments::new(grid.len(), pairs.len());
        for t in chunk {
            for (n, (s, &nrm)) in t.states.iter().zip(&t.norms).enumerate() {
                m.push(&pairs, n, s, nrm);
            }
            m.finish_trajectory();
        }
        reducer.add_chunk(&m);
    }
    Ok(EnsembleResult::from_reducer(
        grid,
        first.mode,
        dim,
        reducer,
        String::new(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleOptions {
    pub trajectories: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Free-form description folded into the digest (for example the
    /// configuration file contents).
    pub tag: String,
}

fn digest(opts: &EnsembleOptions, mode: Mode, grid: &TimeGrid, psi0: &StateVector) -> String {
    let mut h = Sha256::new();
    h.update(opts.tag.as_bytes());
    h.update(opts.seed.to_le_bytes());
    h.update((opts.trajectories as u64).to_le_bytes());
    h.update(mode.name().as_bytes());
    h.update(grid.t_max().to_le_bytes());
    h.update((grid.n_steps() as u64).to_le_bytes());
    for z in psi0.amplitudes() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs streams `0..trajectories` of `seed` and averages them.
pub fn run_ensemble(
    propagator: &Propagator,
    psi0: &StateVector,
    opts: &EnsembleOptions,
) -> Result<EnsembleResult, EnsembleError> {
    if opts.trajectories == 0 {
        return Err(EnsembleError::Empty);
    }
    let run = || run_chunks(propagator, psi0, opts);
    let reducer = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| EnsembleError::Workers(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let grid = *propagator.grid();
    Ok(EnsembleResult::from_reducer(
        grid,
        propagator.mode(),
        psi0.dim(),
        reducer,
        digest(opts, propagator.mode(), &grid, psi0),
    ))
}

fn run_chunks(propagator: &Propagator, psi0: &StateVector, opts: &EnsembleOptions) -> Result<Reducer, EnsembleError> {
    let grid = *propagator.grid();
    let pairs = upper_pairs(psi0.dim());
    let n = opts.trajectories;
    let chunks = n.div_ceil(CHUNK);
    let mut reducer = Reducer::new(grid.len(), pairs.len(), chunks);
    let one_chunk = |c: usize| -> Result<Moments, PropagationError> {
        let mut m = Moments::new(grid.len(), pairs.len());
        for stream in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let noise = propagator.sample_noise(opts.seed, stream as u64);
            propagator.propagate(psi0, &noise, |k, s, nrm| m.push(&pairs, k, s, nrm))?;
            m.finish_trajectory();
        }
        Ok(m)
    };
    for wave in (0..chunks).step_by(WAVE) {
        let results: Vec<Result<Moments, PropagationError>> = (wave..(wave + WAVE).min(chunks))
            .into_par_iter()
            .map(one_chunk)
            .collect();
        for r in results {
            reducer.add_chunk(&r?);
        }
    }
    Ok(reducer)
}
