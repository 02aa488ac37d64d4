use super::algebra::Stage;
use super::{CoefficientError, CoefficientRoute, CoefficientTable};
use crate::linalg::{comm, CMatrix, C64, ZERO};
use crate::models::ModelSpec;

/// Per-grid-point operators shared by all trajectories.
#[derive(Debug, Clone)]
struct Point {
    mih: CMatrix,
    obar0: CMatrix,
    /// `L^dag Obar_0`.
    a: CMatrix,
    g1: CMatrix,
    d2: CMatrix,
    l_obar0: CMatrix,
    l_g1: CMatrix,
}

/// Noise part of `Obar(t, w)` for the exponential kernel, carried along a
/// trajectory as three matrices instead of a history integral.
///
/// With `W_1 = int Obar_1(t, s1) w_{s1} ds1`, `W_2` its second-order
/// counterpart and `V = int K(t, s1) w_{s1} ds1`:
///
/// ```text
/// W_1' = w [L, Obar_0] - gamma W_1 + Lin(W_1) - 2 L^dag V
/// V'   = c/2 [L, W_1] + w/2 [L, G_1] - 2 gamma V + Lin(V) - 1/2 ([L^dag G_1, W_1] + [L^dag W_1, G_1])
/// W_2' = w [L, W_1] - gamma W_2 + Lin(W_2) - [L^dag W_1, W_1]
/// ```
///
/// all starting from zero, so that `Obar(t, w) = Obar_0 + W_1 + W_2`, cut at
/// the table's noise order (the hierarchy keeps its full order). Each
/// call to [`ObarTracker::advance`] takes one Heun step with the noise
/// interpolated linearly between grid samples.
///
/// If the past noise itself moves, `d_t w_s = alpha(t, s) x_t` for all
/// `s <= t` (the shifted noise of the nonlinear equation, with
/// `x = <L^dag>`), the right-hand sides gain `x G_1`, `x D_2` and `2 x V`
/// respectively; [`ObarTracker::advance_drifting`] includes them.
#[derive(Debug, Clone)]
pub struct MemorySeries {
    points: Vec<Point>,
    l: CMatrix,
    ldag: CMatrix,
    gamma: f64,
    c: f64,
    order: usize,
    noise_order: usize,
    dt: f64,
}

impl MemorySeries {
    pub fn new(model: &ModelSpec, table: &CoefficientTable) -> Result<Self, CoefficientError> {
        let (gamma, c) = match (table.route(), table.kernel().exponential_params()) {
            (CoefficientRoute::Closure, Some(p)) => p,
            _ => return Err(CoefficientError::ClosureNeedsExponential),
        };
        let l = model.lindblad().clone();
        let ldag = l.adjoint();
        let grid = table.grid();
        let points = (0..grid.len())
            .map(|n| {
                let m = table.memory_operators(n);
                Point {
                    mih: model.minus_i_h(grid.time(n)),
                    a: ldag.mul_unchecked(&m.obar0),
                    l_obar0: comm(&l, &m.obar0),
                    l_g1: comm(&l, &m.g1),
                    obar0: m.obar0,
                    g1: m.g1,
                    d2: m.d2,
                }
            })
            .collect();
        Ok(Self {
            points,
            l,
            ldag,
            gamma,
            c,
            order: table.order(),
            noise_order: table.noise_order(),
            dt: grid.dt(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn obar0(&self, n: usize) -> &CMatrix {
        &self.points[n].obar0
    }

    /// `(W_1, V, W_2)` derivative at grid point `n` with noise sample `w` and
    /// past-noise drift rate `x`.
    fn rhs(&self, n: usize, s: &[CMatrix; 3], w: C64, x: C64) -> [CMatrix; 3] {
        let p = &self.points[n];
        let st = Stage {
            ldag: &self.ldag,
            mih: &p.mih,
            obar0: &p.obar0,
            a: &p.a,
        };
        let [w1, v, w2] = s;
        let mut d1 = p.l_obar0.scale(w);
        d1.axpy(C64::new(-self.gamma, 0.0), w1);
        d1 += &st.lin(w1);
        d1.axpy(x, &p.g1);
        if self.order < 2 {
            let z = CMatrix::zeros(w1.rows(), w1.cols());
            return [d1, z.clone(), z];
        }
        d1.axpy(C64::new(-2.0, 0.0), &st.ldag_mul(v));

        let mut dv = comm(&self.l, w1).scale_real(0.5 * self.c);
        dv.axpy(w * 0.5, &p.l_g1);
        dv.axpy(C64::new(-2.0 * self.gamma, 0.0), v);
        dv += &st.lin(v);
        let mut sym = st.ldag_comm(&p.g1, w1);
        sym += &st.ldag_comm(w1, &p.g1);
        dv.axpy(C64::new(-0.5, 0.0), &sym);
        dv.axpy(x, &p.d2);

        let mut d2 = comm(&self.l, w1).scale(w);
        d2.axpy(C64::new(-self.gamma, 0.0), w2);
        d2 += &st.lin(w2);
        d2 -= &st.ldag_comm(w1, w1);
        d2.axpy(x * 2.0, v);
        [d1, dv, d2]
    }
}

/// Trajectory-local state of the noise part of `Obar`.
#[derive(Debug, Clone)]
pub struct ObarTracker<'a> {
    series: &'a MemorySeries,
    state: [CMatrix; 3],
    n: usize,
}

impl<'a> ObarTracker<'a> {
    pub fn new(series: &'a MemorySeries) -> Self {
        let d = series.l.rows();
        let z = CMatrix::zeros(d, d);
        Self {
            series,
            state: [z.clone(), z.clone(), z],
            n: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.n
    }

    /// `Obar(t_n, w)` at the current grid point.
    pub fn obar(&self) -> CMatrix {
        let mut o = self.series.points[self.n].obar0.clone();
        if self.series.noise_order >= 1 {
            o += &self.state[0];
        }
        if self.series.noise_order >= 2 {
            o += &self.state[2];
        }
        o
    }

    /// Advances from `t_n` to `t_{n+1}` given the noise samples at both ends.
    pub fn advance(&mut self, w_start: C64, w_end: C64) {
        self.advance_drifting(w_start, w_end, ZERO, ZERO);
    }

    /// As [`advance`](Self::advance) while the past noise drifts at rate
    /// `alpha(t, s) x_t`, with `x` given at both ends of the step.
    pub fn advance_drifting(&mut self, w_start: C64, w_end: C64, x_start: C64, x_end: C64) {
        let n = self.n;
        assert!(n + 1 < self.series.len(), "tracker stepped past the grid");
        self.n += 1;
        if self.series.noise_order == 0 {
            return;
        }
        let dt = self.series.dt;
        let k1 = self.series.rhs(n, &self.state, w_start, x_start);
        let mut pred = self.state.clone();
        for (p, k) in pred.iter_mut().zip(&k1) {
            p.axpy(C64::new(dt, 0.0), k);
        }
        let k2 = self.series.rhs(n + 1, &pred, w_end, x_end);
        for ((s, a), b) in self.state.iter_mut().zip(&k1).zip(&k2) {
            s.axpy(C64::new(0.5 * dt, 0.0), a);
            s.axpy(C64::new(0.5 * dt, 0.0), b);
        }
    }
}
