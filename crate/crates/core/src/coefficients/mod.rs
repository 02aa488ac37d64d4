//! O-operator coefficients.
//!
//! The O-operator is expanded in the model's basis layout,
//!
//! ```text
//! O(t, s, z*) = sum_j f_j(t, s) O_j^(0)
//!             + sum_j int p_j^(1)(t, s, s1) z*_{s1} ds1 O_j^(1)
//!             + sum_j int int p_j^(2)(t, s, s1, s2) z*_{s1} z*_{s2} ds1 ds2 O_j^(2)
//! ```
//!
//! and only the memory integrals `F_j(t) = int_0^t alpha(t, s) f_j(t, s) ds`,
//! `P_j^(1)(t, s1)`, `P_j^(2)(t, s1, s2)` enter the trajectory equations.
//! [`integrate_coefficients`] fills a [`CoefficientTable`] once per
//! (model, kernel, grid); trajectories share it read-only.

mod algebra;
mod assemble;
mod printed;
mod residual;
mod tracker;
mod wavefront;

pub use assemble::{assemble_obar, assemble_obar_values};
pub use printed::{has_printed_form, printed_defect, PrintedDefect};
pub use residual::{consistency_residual, ResidualReport};
pub use tracker::{MemorySeries, ObarTracker};

use crate::linalg::{CMatrix, C64};
use crate::models::{BasisLayout, ModelSpec};
use crate::noise::{CorrelationKernel, NoiseError, TimeGrid};
use wavefront::{Route, Wavefront};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoefficientError {
    #[error("truncation order {requested} exceeds the model's exact noise order {exact}")]
    OrderTooHigh { requested: usize, exact: usize },
    #[error("noise order {0} is not supported (maximum 2)")]
    OrderUnsupported(usize),
    #[error("the exponential closure needs an exponential kernel")]
    ClosureNeedsExponential,
    #[error(transparent)]
    Kernel(#[from] NoiseError),
    #[error("coefficient integration produced a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("coefficient equations left the basis span (leak {leak:e} > {tolerance:e})")]
    BasisLeak { leak: f64, tolerance: f64 },
    #[error(
        "coefficients not converged: halving dt changes F by {difference:e} (tolerance {tolerance:e}); try dt <= {suggested_dt:e} (now {dt:e})"
    )]
    NotConverged {
        difference: f64,
        tolerance: f64,
        dt: f64,
        suggested_dt: f64,
    },
    #[error("coefficient table lacks {0}; integrate with a higher detail level")]
    Missing(&'static str),
    #[error("grid mismatch: table has {table} steps, input has {input}")]
    GridMismatch { table: usize, input: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
}

/// How much of the coefficient hierarchy a table keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableDetail {
    /// `F_j(t)` and, for the exponential closure, the integrated memory
    /// operators needed by [`ObarTracker`]. O(N) storage.
    Memory,
    /// Adds the kernels `P^(1)(t, s1)` and `P^(2)(t, s1, s2)`.
    Kernels,
    /// Adds the raw lines `f(t, s)`, `p^(1)(t, s, s1)`, `p^(2)(t, s, s1, s2)`
    /// needed by [`consistency_residual`]. O(N^(order + 2)) storage.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientRoute {
    /// Exact ODE closure of the memory integrals (exponential kernel only),
    /// fourth order in `dt`.
    Closure,
    /// Trapezoid memory integrals over explicit lines (any kernel), second
    /// order in `dt`.
    Quadrature,
}

/// What a truncation order below the model's exact noise order cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Integrate the coefficient hierarchy at `min(exact order, 2)` and drop
    /// the higher noise terms only when `Obar` is assembled. The kept
    /// coefficients are the exact ones (for models up to spin-3/2).
    #[default]
    Assembly,
    /// Truncate the O-operator ansatz itself: the coefficient equations are
    /// projected onto the kept orders and lose the feedback of the dropped
    /// ones.
    Hierarchy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientOptions {
    pub detail: TableDetail,
    pub truncation: Truncation,
    /// `None` picks the closure for exponential kernels.
    pub route: Option<CoefficientRoute>,
    /// Halving-`dt` probe tolerance on `F_j`, relative to `max(1, |F|)`;
    /// `None` skips the probe.
    pub probe_tolerance: Option<f64>,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        Self {
            detail: TableDetail::Memory,
            truncation: Truncation::Assembly,
            route: None,
            probe_tolerance: Some(1e-6),
        }
    }
}

/// Outcome of the halving-`dt` probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub difference: f64,
    pub tolerance: f64,
    /// Length of the time window the probe covered.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawLines {
    pub f: Vec<C64>,
    pub p1: Option<Vec<C64>>,
    pub p2: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TableData {
    pub obar0: Vec<C64>,
    pub g1: Option<Vec<C64>>,
    pub d2: Option<Vec<C64>>,
    pub obar1: Option<Vec<C64>>,
    pub obar2: Option<Vec<C64>>,
    pub raw: Option<RawLines>,
}

/// Coefficients of the O-operator on a time grid.
///
/// Components are stored per basis order in the order of
/// [`BasisLayout::entries`]. Indices are grid indices; noise arguments
/// never exceed the time index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    grid: TimeGrid,
    order: usize,
    noise_order: usize,
    layout: BasisLayout,
    kernel: CorrelationKernel,
    route: CoefficientRoute,
    detail: TableDetail,
    comps: [usize; 3],
    data: TableData,
    probe: Option<ProbeReport>,
}

/// Noise-free memory operators at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryOperators {
    /// `Obar_0(t) = sum_j F_j(t) O_j^(0)`.
    pub obar0: CMatrix,
    /// `G_1(t) = int alpha(t, s1) Obar_1(t, s1) ds1` (closure only).
    pub g1: CMatrix,
    /// `D_2(t) = int int alpha(t, s1) alpha(t, s) Obar_2(t, s, s1)` (closure only).
    pub d2: CMatrix,
}

pub(crate) fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

pub(crate) fn tet(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

pub(crate) fn tri_sq(n: usize) -> usize {
    n * (n + 1) * (2 * n + 1) / 6
}

fn p2_base(n: usize) -> usize {
    (tri(n) * tri(n) + tri_sq(n)) / 2
}

impl CoefficientTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Noise order of the coefficient hierarchy the table was integrated at.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Highest noise order kept in `Obar`; at most [`order`](Self::order).
    pub fn noise_order(&self) -> usize {
        self.noise_order
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn route(&self) -> CoefficientRoute {
        self.route
    }

    pub fn detail(&self) -> TableDetail {
        self.detail
    }

    pub fn probe(&self) -> Option<&ProbeReport> {
        self.probe.as_ref()
    }

    /// Number of components used at `order` (zero above the truncation).
    pub fn components(&self, order: usize) -> usize {
        self.comps.get(order).copied().unwrap_or(0)
    }

    fn check_t(&self, n: usize) {
        assert!(n < self.grid.len(), "time index {n} outside the table");
    }

    /// `F_j(t_n)`.
    pub fn obar0(&self, n: usize) -> &[C64] {
        self.check_t(n);
        let c = self.comps[0];
        &self.data.obar0[n * c..(n + 1) * c]
    }

    pub fn obar0_matrix(&self, n: usize) -> CMatrix {
        self.layout.expand(0, self.obar0(n))
    }

    /// Closure memory operators `G_1`, `D_2` components at `t_n`.
    pub fn closure(&self, n: usize) -> Option<(&[C64], &[C64])> {
        self.check_t(n);
        let c1 = self.comps[1];
        let c2 = self.comps[2];
        let g1 = self.data.g1.as_ref().map_or(&[][..], |v| &v[n * c1..(n + 1) * c1]);
        let d2 = self.data.d2.as_ref().map_or(&[][..], |v| &v[n * c2..(n + 1) * c2]);
        (self.route == CoefficientRoute::Closure).then_some((g1, d2))
    }

    pub fn memory_operators(&self, n: usize) -> MemoryOperators {
        let d = self.layout.dim();
        let (g1, d2) = match self.closure(n) {
            Some((g1, d2)) => (
                if self.order >= 1 {
                    self.layout.expand(1, g1)
                } else {
                    CMatrix::zeros(d, d)
                },
                if self.order >= 2 {
                    self.layout.expand(2, d2)
                } else {
                    CMatrix::zeros(d, d)
                },
            ),
            None => (CMatrix::zeros(d, d), CMatrix::zeros(d, d)),
        };
        MemoryOperators {
            obar0: self.obar0_matrix(n),
            g1,
            d2,
        }
    }

    pub fn has_kernels(&self) -> bool {
        self.order == 0 || self.data.obar1.is_some()
    }

    pub fn has_raw(&self) -> bool {
        self.data.raw.is_some()
    }

    /// `P_j^(1)(t_n, s1)`, `s1 <= n`.
    pub fn obar1(&self, n: usize, s1: usize) -> Option<&[C64]> {
        self.check_t(n);
        debug_assert!(s1 <= n);
        let c = self.comps[1];
        self.data
            .obar1
            .as_ref()
            .map(|v| &v[(tri(n) + s1) * c..(tri(n) + s1 + 1) * c])
    }

    /// `P_j^(2)(t_n, s1, s2)`, symmetric, both `<= n`.
    pub fn obar2(&self, n: usize, s1: usize, s2: usize) -> Option<&[C64]> {
        self.check_t(n);
        let (a, b) = (s1.min(s2), s1.max(s2));
        debug_assert!(b <= n);
        let c = self.comps[2];
        let at = tet(n) + tri(b) + a;
        self.data.obar2.as_ref().map(|v| &v[at * c..(at + 1) * c])
    }

    /// `f_j(t_n, s)`, `s <= n`.
    pub fn raw_f(&self, n: usize, s: usize) -> Option<&[C64]> {
        self.check_t(n);
        let c = self.comps[0];
        self.data
            .raw
            .as_ref()
            .map(|r| &r.f[(tri(n) + s) * c..(tri(n) + s + 1) * c])
    }

    /// `p_j^(1)(t_n, s, s1)`, both `<= n`.
    pub fn raw_p1(&self, n: usize, s: usize, s1: usize) -> Option<&[C64]> {
        self.check_t(n);
        let c = self.comps[1];
        let at = tri_sq(n) + s * (n + 1) + s1;
        self.data
            .raw
            .as_ref()
            .and_then(|r| r.p1.as_ref())
            .map(|v| &v[at * c..(at + 1) * c])
    }

    /// `p_j^(2)(t_n, s, s1, s2)`, symmetric in `s1, s2`, all `<= n`.
    pub fn raw_p2(&self, n: usize, s: usize, s1: usize, s2: usize) -> Option<&[C64]> {
        self.check_t(n);
        let (a, b) = (s1.min(s2), s1.max(s2));
        let c = self.comps[2];
        let at = p2_base(n) + s * tri(n + 1) + tri(b) + a;
        self.data
            .raw
            .as_ref()
            .and_then(|r| r.p2.as_ref())
            .map(|v| &v[at * c..(at + 1) * c])
    }
}

/// Integrates the coefficient table with default options: memory detail,
/// automatic route, and a `1e-6` halving-`dt` probe.
pub fn integrate_coefficients(
    model: &ModelSpec,
    kernel: &CorrelationKernel,
    grid: TimeGrid,
    max_order: usize,
) -> Result<CoefficientTable, CoefficientError> {
    integrate_coefficients_with(model, kernel, grid, max_order, &CoefficientOptions::default())
}

pub fn integrate_coefficients_with(
    model: &ModelSpec,
    kernel: &CorrelationKernel,
    grid: TimeGrid,
    max_order: usize,
    options: &CoefficientOptions,
) -> Result<CoefficientTable, CoefficientError> {
    if max_order > model.noise_order_exact() {
        return Err(CoefficientError::OrderTooHigh {
            requested: max_order,
            exact: model.noise_order_exact(),
        });
    }
    if max_order > 2 {
        return Err(CoefficientError::OrderUnsupported(max_order));
    }
    kernel.check_covers(&grid)?;
    let hierarchy = match options.truncation {
        Truncation::Assembly => model.noise_order_exact().min(2),
        Truncation::Hierarchy => max_order,
    };
    let route = match (options.route, kernel.exponential_params()) {
        (Some(CoefficientRoute::Closure), None) => return Err(CoefficientError::ClosureNeedsExponential),
        (Some(r), _) => r,
        (None, Some(_)) => CoefficientRoute::Closure,
        (None, None) => CoefficientRoute::Quadrature,
    };
    let inner = match route {
        CoefficientRoute::Closure => {
            let (gamma, c) = kernel.exponential_params().expect("checked above");
            Route::Closure { gamma, c }
        }
        CoefficientRoute::Quadrature => Route::Quadrature,
    };
    // Without the closure, propagation has to assemble noise terms from the kernels.
    let detail = if route == CoefficientRoute::Quadrature && hierarchy >= 1 {
        options.detail.max(TableDetail::Kernels)
    } else {
        options.detail
    };
    let kernels = detail >= TableDetail::Kernels;
    let raw = detail == TableDetail::Full;
    let data = Wavefront::new(model, kernel, grid, hierarchy, inner, kernels, raw).integrate()?;
    let layout = model.layout().clone();
    let comps = [0, 1, 2].map(|k| if k <= hierarchy { layout.count(k) } else { 0 });
    let mut table = CoefficientTable {
        grid,
        order: hierarchy,
        noise_order: max_order,
        layout,
        kernel: kernel.clone(),
        route,
        detail,
        comps,
        data,
        probe: None,
    };
    if let Some(tol) = options.probe_tolerance {
        table.probe = Some(probe(model, kernel, &table, inner, tol)?);
    }
    Ok(table)
}

/// Reruns the memory integrals at `dt / 2` and compares `F_j` on shared points.
fn probe(
    model: &ModelSpec,
    kernel: &CorrelationKernel,
    table: &CoefficientTable,
    route: Route,
    tolerance: f64,
) -> Result<ProbeReport, CoefficientError> {
    let grid = table.grid;
    let (coarse, steps, p) = match route {
        Route::Closure { .. } => (None, grid.n_steps(), 4.0),
        Route::Quadrature => {
            // Each quadrature step costs O(n^(order + 1)); probe an initial window.
            let window = grid.n_steps().min([64, 32, 12][table.order]);
            let g = TimeGrid::new(grid.time(window), window)?;
            let coarse = Wavefront::new(model, kernel, g, table.order, route, false, false).integrate()?;
            (Some(coarse.obar0), window, 2.0)
        }
    };
    let fine_grid = TimeGrid::new(grid.time(steps), steps)?.refine(2);
    let fine = Wavefront::new(model, kernel, fine_grid, table.order, route, false, false).integrate()?;
    let c = table.comps[0];
    let coarse = coarse.as_deref().unwrap_or(&table.data.obar0);
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for n in 0..=steps {
        for j in 0..c {
            let a = coarse[n * c + j];
            let b = fine.obar0[2 * n * c + j];
            diff = diff.max((a - b).norm());
            scale = scale.max(b.norm());
        }
    }
    let tol = tolerance * scale;
    if diff > tol {
        let dt = grid.dt();
        return Err(CoefficientError::NotConverged {
            difference: diff,
            tolerance: tol,
            dt,
            suggested_dt: 0.8 * dt * (tol / diff).powf(1.0 / p),
        });
    }
    Ok(ProbeReport {
        difference: diff,
        tolerance: tol,
        window: grid.time(steps),
    })
}
