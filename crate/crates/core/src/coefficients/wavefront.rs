//! Fixed-step RK4 over all coefficient lines at once.
//!
//! Lines `O_k(t, s, s1, ..)` are born on grid points as `t` reaches their
//! last argument and are then advanced together with everything they couple
//! to. Two routes share the line equations:
//!
//! * `Closure` (exponential kernel): the memory integrals obey their own ODEs
//!   (see [`super::algebra::Closure`]), so the scheme is fourth order.
//! * `Quadrature` (any kernel): every stage recomputes the integrals by the
//!   trapezoid rule over the born lines plus a sliver node at the stage time;
//!   second order in `dt`.

use std::cell::Cell;

use super::algebra::{self, Closure, Stage};
use super::{tet, tri, tri_sq, CoefficientError, TableData};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::models::{BasisLayout, ModelSpec};
use crate::noise::{CorrelationKernel, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Route {
    Closure { gamma: f64, c: f64 },
    Quadrature,
}

/// Offsets of each line family inside the flat state vector.
struct StateLayout {
    lines: usize,
    c: [usize; 3],
    core: usize,
    kern1: Option<usize>,
    kern1_stride: usize,
    kern2: Option<usize>,
    raw0: Option<usize>,
    raw1: Option<usize>,
    raw2: Option<usize>,
    total: usize,
}

impl StateLayout {
    fn new(lines: usize, c: [usize; 3], order: usize, closure: bool, kernels: bool, raw: bool) -> Self {
        let mut at = 0;
        let mut take = |len: usize| {
            let start = at;
            at += len;
            start
        };
        let core = take(if closure { c[0] + c[1] + c[2] } else { 0 });
        let kern1_stride = c[1] + c[2];
        let kern1 = (closure && kernels && order >= 1).then(|| take(lines * kern1_stride));
        let kern2 = (closure && kernels && order >= 2).then(|| take(tri(lines) * c[2]));
        let raw0 = raw.then(|| take(lines * c[0]));
        let raw1 = (raw && order >= 1).then(|| take(lines * lines * c[1]));
        let raw2 = (raw && order >= 2).then(|| take(lines * tri(lines) * c[2]));
        Self {
            lines,
            c,
            core,
            kern1,
            kern1_stride,
            kern2,
            raw0,
            raw1,
            raw2,
            total: at,
        }
    }

    fn raw0(&self, s: usize) -> usize {
        self.raw0.unwrap() + s * self.c[0]
    }

    fn raw1(&self, s: usize, s1: usize) -> usize {
        self.raw1.unwrap() + (s * self.lines + s1) * self.c[1]
    }

    /// Requires `s1 <= s2`.
    fn raw2(&self, s: usize, s1: usize, s2: usize) -> usize {
        self.raw2.unwrap() + (s * tri(self.lines) + tri(s2) + s1) * self.c[2]
    }

    fn kern1(&self, s1: usize) -> usize {
        self.kern1.unwrap() + s1 * self.kern1_stride
    }

    fn kern2(&self, s1: usize, s2: usize) -> usize {
        self.kern2.unwrap() + (tri(s2) + s1) * self.c[2]
    }
}

/// Memory integrals at one stage in dense form.
struct Integrals {
    obar0: CMatrix,
    /// `Obar_1(s1)` for born `s1`.
    obar1: Vec<CMatrix>,
    /// `Obar_2(s1, s2)` at `tri(s2) + s1`.
    obar2: Vec<CMatrix>,
}

pub(crate) struct Wavefront<'a> {
    model: &'a ModelSpec,
    kernel: &'a CorrelationKernel,
    layout: &'a BasisLayout,
    grid: TimeGrid,
    order: usize,
    route: Route,
    kernels: bool,
    raw: bool,
    l: CMatrix,
    ldag: CMatrix,
    l_comps: Vec<C64>,
    sl: StateLayout,
    leak: Cell<f64>,
    scale: Cell<f64>,
}

impl<'a> Wavefront<'a> {
    pub fn new(
        model: &'a ModelSpec,
        kernel: &'a CorrelationKernel,
        grid: TimeGrid,
        order: usize,
        route: Route,
        kernels: bool,
        raw: bool,
    ) -> Self {
        let layout = model.layout();
        let c = [0, 1, 2].map(|k| if k <= order { layout.count(k) } else { 0 });
        let closure = matches!(route, Route::Closure { .. });
        let sl = StateLayout::new(grid.len(), c, order, closure, kernels, raw || !closure);
        let l = model.lindblad().clone();
        let (l_comps, _) = layout.project(0, &l);
        Self {
            model,
            kernel,
            layout,
            grid,
            order,
            route,
            kernels,
            raw,
            ldag: l.adjoint(),
            l,
            l_comps,
            sl,
            leak: Cell::new(0.0),
            scale: Cell::new(0.0),
        }
    }

    fn expand(&self, order: usize, comps: &[C64]) -> CMatrix {
        self.layout.expand(order, comps)
    }

    fn project(&self, order: usize, m: &CMatrix, out: &mut [C64]) {
        let leak = self.layout.project_into(order, m, out);
        if leak > self.leak.get() {
            self.leak.set(leak);
        }
        let s = m.norm_max();
        if s > self.scale.get() {
            self.scale.set(s);
        }
    }

    /// Trapezoid weights on nodes `0..=n` plus the sliver node at `t_n + h`.
    fn weights(&self, n: usize, h: f64) -> (Vec<f64>, f64) {
        let dt = self.grid.dt();
        let mut w = vec![dt; n + 1];
        if n == 0 {
            w[0] = 0.5 * h;
        } else {
            w[0] = 0.5 * dt;
            w[n] = 0.5 * dt + 0.5 * h;
        }
        (w, 0.5 * h)
    }

    /// `sum_m w_m alpha(t_n + h, t_m) line(m)` over component slices.
    fn quad_comps(&self, n: usize, h: f64, c: usize, at: impl Fn(usize) -> usize, y: &[C64]) -> Vec<C64> {
        let (w, _) = self.weights(n, h);
        let dt = self.grid.dt();
        let mut acc = vec![ZERO; c];
        for (m, &wm) in w.iter().enumerate() {
            let a = self.kernel.lag((n - m) as f64 * dt + h) * wm;
            let off = at(m);
            for (z, &v) in acc.iter_mut().zip(&y[off..off + c]) {
                *z += a * v;
            }
        }
        acc
    }

    fn quad_obar0_comps(&self, n: usize, h: f64, y: &[C64]) -> Vec<C64> {
        let c0 = self.sl.c[0];
        let mut acc = self.quad_comps(n, h, c0, |m| self.sl.raw0(m), y);
        let (_, w_tau) = self.weights(n, h);
        let a = self.kernel.lag(0.0) * w_tau;
        for (z, &v) in acc.iter_mut().zip(&self.l_comps) {
            *z += a * v;
        }
        acc
    }

    fn integrals(&self, n: usize, h: f64, y: &[C64], need2: bool) -> Integrals {
        let c = self.sl.c;
        match self.route {
            Route::Closure { .. } => {
                let obar0 = self.expand(0, &y[self.sl.core..self.sl.core + c[0]]);
                let obar1 = if self.order >= 1 && self.sl.kern1.is_some() {
                    (0..=n)
                        .map(|s1| {
                            let o = self.sl.kern1(s1);
                            self.expand(1, &y[o..o + c[1]])
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let obar2 = if need2 && self.order >= 2 {
                    (0..tri(n + 1))
                        .map(|i| {
                            let o = self.sl.kern2.unwrap() + i * c[2];
                            self.expand(2, &y[o..o + c[2]])
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                Integrals { obar0, obar1, obar2 }
            }
            Route::Quadrature => {
                let obar0 = self.expand(0, &self.quad_obar0_comps(n, h, y));
                let obar1 = if self.order >= 1 {
                    (0..=n)
                        .map(|s1| {
                            let comps = self.quad_comps(n, h, c[1], |m| self.sl.raw1(m, s1), y);
                            self.expand(1, &comps)
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let obar2 = if self.order >= 2 {
                    let mut out = Vec::with_capacity(tri(n + 1));
                    for s2 in 0..=n {
                        for s1 in 0..=s2 {
                            let comps = self.quad_comps(n, h, c[2], |m| self.sl.raw2(m, s1, s2), y);
                            out.push(self.expand(2, &comps));
                        }
                    }
                    out
                } else {
                    Vec::new()
                };
                Integrals { obar0, obar1, obar2 }
            }
        }
    }

    /// Derivative of every born line at stage time `t_n + h`.
    fn rhs(&self, n: usize, h: f64, y: &[C64], dy: &mut [C64]) {
        dy.iter_mut().for_each(|z| *z = ZERO);
        let tau = self.grid.time(n) + h;
        let c = self.sl.c;
        let ints = self.integrals(n, h, y, self.raw);
        let mih = self.model.minus_i_h(tau);
        let a = self.ldag.mul_unchecked(&ints.obar0);
        let st = Stage {
            ldag: &self.ldag,
            mih: &mih,
            obar0: &ints.obar0,
            a: &a,
        };

        if let Route::Closure { gamma, c: rate } = self.route {
            let cl = Closure {
                l: &self.l,
                gamma,
                c: rate,
            };
            let core = self.sl.core;
            let g1 = (self.order >= 1).then(|| self.expand(1, &y[core + c[0]..core + c[0] + c[1]]));
            let d2 = (self.order >= 2).then(|| {
                let o = core + c[0] + c[1];
                self.expand(2, &y[o..o + c[2]])
            });
            let (d_o, d_g, d_d) = cl.core(&st, g1.as_ref(), d2.as_ref());
            self.project(0, &d_o, &mut dy[core..core + c[0]]);
            if let Some(d) = d_g {
                self.project(1, &d, &mut dy[core + c[0]..core + c[0] + c[1]]);
            }
            if let Some(d) = d_d {
                let o = core + c[0] + c[1];
                self.project(2, &d, &mut dy[o..o + c[2]]);
            }
            if self.sl.kern1.is_some() {
                let g1 = g1.as_ref().unwrap();
                for s1 in 0..=n {
                    let o = self.sl.kern1(s1);
                    let p1 = &ints.obar1[s1];
                    let k = (self.order >= 2).then(|| self.expand(2, &y[o + c[1]..o + c[1] + c[2]]));
                    let d = cl.obar1_line(&st, p1, k.as_ref());
                    self.project(1, &d, &mut dy[o..o + c[1]]);
                    if let Some(k) = k {
                        let d = cl.k_line(&st, &k, p1, g1);
                        self.project(2, &d, &mut dy[o + c[1]..o + c[1] + c[2]]);
                    }
                }
            }
            if self.sl.kern2.is_some() {
                for s2 in 0..=n {
                    for s1 in 0..=s2 {
                        let o = self.sl.kern2(s1, s2);
                        let p2 = self.expand(2, &y[o..o + c[2]]);
                        let d = cl.obar2_line(&st, &p2, &ints.obar1[s1], &ints.obar1[s2]);
                        self.project(2, &d, &mut dy[o..o + c[2]]);
                    }
                }
            }
        }

        if self.sl.raw0.is_none() {
            return;
        }
        let o0: Vec<CMatrix> = (0..=n)
            .map(|s| {
                let o = self.sl.raw0(s);
                self.expand(0, &y[o..o + c[0]])
            })
            .collect();
        for s in 0..=n {
            let d = algebra::raw0_rhs(&st, &o0[s], ints.obar1.get(s));
            let o = self.sl.raw0(s);
            self.project(0, &d, &mut dy[o..o + c[0]]);
        }
        if self.order == 0 {
            return;
        }
        let o1: Vec<CMatrix> = (0..=n)
            .flat_map(|s| (0..=n).map(move |s1| (s, s1)))
            .map(|(s, s1)| {
                let o = self.sl.raw1(s, s1);
                self.expand(1, &y[o..o + c[1]])
            })
            .collect();
        let obar2 = |a: usize, b: usize| &ints.obar2[tri(a.max(b)) + a.min(b)];
        for s in 0..=n {
            for s1 in 0..=n {
                let q = (self.order >= 2).then(|| obar2(s, s1));
                let d = algebra::raw1_rhs(&st, &o1[s * (n + 1) + s1], &o0[s], &ints.obar1[s1], q);
                let o = self.sl.raw1(s, s1);
                self.project(1, &d, &mut dy[o..o + c[1]]);
            }
        }
        if self.order < 2 {
            return;
        }
        for s in 0..=n {
            for s2 in 0..=n {
                for s1 in 0..=s2 {
                    let o = self.sl.raw2(s, s1, s2);
                    let o2 = self.expand(2, &y[o..o + c[2]]);
                    let d = algebra::raw2_rhs(
                        &st,
                        &o2,
                        &o0[s],
                        &o1[s * (n + 1) + s1],
                        &o1[s * (n + 1) + s2],
                        &ints.obar1[s1],
                        &ints.obar1[s2],
                        obar2(s1, s2),
                    );
                    self.project(2, &d, &mut dy[o..o + c[2]]);
                }
            }
        }
    }

    /// Initial values of the lines born at grid point `n`.
    fn birth(&self, n: usize, y: &mut [C64]) {
        let c = self.sl.c;
        let mut buf = vec![ZERO; c[0].max(c[1]).max(c[2])];
        if self.sl.kern1.is_some() {
            let core = self.sl.core;
            let obar0 = self.expand(0, &y[core..core + c[0]]);
            let o = self.sl.kern1(n);
            self.project(1, &algebra::boundary(&self.l, &obar0, 1), &mut buf[..c[1]]);
            y[o..o + c[1]].copy_from_slice(&buf[..c[1]]);
            if self.order >= 2 {
                let g1 = self.expand(1, &y[core + c[0]..core + c[0] + c[1]]);
                self.project(2, &algebra::boundary(&self.l, &g1, 2), &mut buf[..c[2]]);
                y[o + c[1]..o + c[1] + c[2]].copy_from_slice(&buf[..c[2]]);
            }
        }
        if self.sl.kern2.is_some() {
            for s1 in 0..=n {
                let src = self.sl.kern1(s1);
                let p1 = self.expand(1, &y[src..src + c[1]]);
                self.project(2, &algebra::boundary(&self.l, &p1, 2), &mut buf[..c[2]]);
                let o = self.sl.kern2(s1, n);
                y[o..o + c[2]].copy_from_slice(&buf[..c[2]]);
            }
        }
        if self.sl.raw0.is_none() {
            return;
        }
        let o = self.sl.raw0(n);
        y[o..o + c[0]].copy_from_slice(&self.l_comps);
        if self.order >= 1 {
            for s in 0..n {
                let src = self.sl.raw0(s);
                let o0 = self.expand(0, &y[src..src + c[0]]);
                self.project(1, &algebra::boundary(&self.l, &o0, 1), &mut buf[..c[1]]);
                let o = self.sl.raw1(s, n);
                y[o..o + c[1]].copy_from_slice(&buf[..c[1]]);
            }
        }
        if self.order >= 2 {
            for s in 0..n {
                for s1 in 0..=n {
                    let src = self.sl.raw1(s, s1);
                    let o1 = self.expand(1, &y[src..src + c[1]]);
                    self.project(2, &algebra::boundary(&self.l, &o1, 2), &mut buf[..c[2]]);
                    let o = self.sl.raw2(s, s1, n);
                    y[o..o + c[2]].copy_from_slice(&buf[..c[2]]);
                }
            }
        }
    }

    fn record(&self, n: usize, y: &[C64], data: &mut TableData) {
        let c = self.sl.c;
        match self.route {
            Route::Closure { .. } => {
                let core = self.sl.core;
                data.obar0.extend_from_slice(&y[core..core + c[0]]);
                if let Some(g1) = data.g1.as_mut() {
                    g1.extend_from_slice(&y[core + c[0]..core + c[0] + c[1]]);
                }
                if let Some(d2) = data.d2.as_mut() {
                    let o = core + c[0] + c[1];
                    d2.extend_from_slice(&y[o..o + c[2]]);
                }
                if let Some(p1) = data.obar1.as_mut() {
                    for s1 in 0..=n {
                        let o = self.sl.kern1(s1);
                        p1.extend_from_slice(&y[o..o + c[1]]);
                    }
                }
                if let Some(p2) = data.obar2.as_mut() {
                    for s2 in 0..=n {
                        for s1 in 0..=s2 {
                            let o = self.sl.kern2(s1, s2);
                            p2.extend_from_slice(&y[o..o + c[2]]);
                        }
                    }
                }
            }
            Route::Quadrature => {
                data.obar0.extend(self.quad_obar0_comps(n, 0.0, y));
                if let Some(p1) = data.obar1.as_mut() {
                    for s1 in 0..=n {
                        p1.extend(self.quad_comps(n, 0.0, c[1], |m| self.sl.raw1(m, s1), y));
                    }
                }
                if let Some(p2) = data.obar2.as_mut() {
                    for s2 in 0..=n {
                        for s1 in 0..=s2 {
                            p2.extend(self.quad_comps(n, 0.0, c[2], |m| self.sl.raw2(m, s1, s2), y));
                        }
                    }
                }
            }
        }
        if let Some(raw) = data.raw.as_mut() {
            for s in 0..=n {
                let o = self.sl.raw0(s);
                raw.f.extend_from_slice(&y[o..o + c[0]]);
            }
            if let Some(p1) = raw.p1.as_mut() {
                for s in 0..=n {
                    for s1 in 0..=n {
                        let o = self.sl.raw1(s, s1);
                        p1.extend_from_slice(&y[o..o + c[1]]);
                    }
                }
            }
            if let Some(p2) = raw.p2.as_mut() {
                for s in 0..=n {
                    for s2 in 0..=n {
                        for s1 in 0..=s2 {
                            let o = self.sl.raw2(s, s1, s2);
                            p2.extend_from_slice(&y[o..o + c[2]]);
                        }
                    }
                }
            }
        }
    }

    pub fn integrate(&self) -> Result<TableData, CoefficientError> {
        let lines = self.grid.len();
        let c = self.sl.c;
        let closure = matches!(self.route, Route::Closure { .. });
        let mut data = TableData {
            obar0: Vec::with_capacity(lines * c[0]),
            g1: (closure && self.order >= 1).then(|| Vec::with_capacity(lines * c[1])),
            d2: (closure && self.order >= 2).then(|| Vec::with_capacity(lines * c[2])),
            obar1: (self.kernels && self.order >= 1).then(|| Vec::with_capacity(tri(lines) * c[1])),
            obar2: (self.kernels && self.order >= 2).then(|| Vec::with_capacity(tet(lines) * c[2])),
            raw: self.raw.then(|| super::RawLines {
                f: Vec::with_capacity(tri(lines) * c[0]),
                p1: (self.order >= 1).then(|| Vec::with_capacity(tri_sq(lines) * c[1])),
                p2: (self.order >= 2).then(Vec::new),
            }),
        };
        let total = self.sl.total;
        let mut y = vec![ZERO; total];
        let mut k = [
            vec![ZERO; total],
            vec![ZERO; total],
            vec![ZERO; total],
            vec![ZERO; total],
        ];
        let mut tmp = vec![ZERO; total];
        let dt = self.grid.dt();
        self.birth(0, &mut y);
        self.record(0, &y, &mut data);
        for n in 0..self.grid.n_steps() {
            let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
            for (i, &(frac, coef)) in stages.iter().enumerate() {
                let src: &[C64] = if i == 0 {
                    &y
                } else {
                    for ((t, &yy), &kk) in tmp.iter_mut().zip(&y).zip(&k[i - 1]) {
                        *t = yy + kk * (coef * dt);
                    }
                    &tmp
                };
                self.rhs(n, frac * dt, src, &mut k[i]);
            }
            for (j, yy) in y.iter_mut().enumerate() {
                *yy += (k[0][j] + (k[1][j] + k[2][j]) * 2.0 + k[3][j]) * (dt / 6.0);
            }
            if y.iter().any(|z| !z.is_finite()) {
                return Err(CoefficientError::NonFinite {
                    t: self.grid.time(n + 1),
                });
            }
            self.birth(n + 1, &mut y);
            self.record(n + 1, &y, &mut data);
        }
        let tol = 1e-9 * self.scale.get().max(1.0);
        if self.leak.get() > tol {
            return Err(CoefficientError::BasisLeak {
                leak: self.leak.get(),
                tolerance: tol,
            });
        }
        Ok(data)
    }
}
