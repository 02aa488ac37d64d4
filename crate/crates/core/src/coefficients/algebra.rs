//! Right-hand sides of the consistency condition, order by order.
//!
//! With `O = O_0 + int O_1 z + int int O_2 z z` (each `O_k` symmetric in its
//! noise arguments) the condition
//! `d_t O = [-iH + L z_t - L^dag Obar, O] - L^dag dObar/dz_s` splits into
//!
//! ```text
//! d_t O_0(s)          = [-iH, O_0] - [L^dag Obar_0, O_0] - L^dag Obar_1(s)
//! d_t O_1(s, s1)      = [-iH, O_1] - [L^dag Obar_0, O_1] - [L^dag Obar_1(s1), O_0(s)]
//!                       - 2 L^dag Obar_2(s, s1)
//! d_t O_2(s, s1, s2)  = [-iH, O_2] - [L^dag Obar_0, O_2] - [L^dag Obar_2(s1, s2), O_0(s)]
//!                       - 1/2 ([L^dag Obar_1(s1), O_1(s, s2)] + [L^dag Obar_1(s2), O_1(s, s1)])
//! ```
//!
//! with boundary values `O_0(s, s) = L`, `O_k(t, t, ..) = 0` and
//! `O_k(t, s, .., t) = [L, O_{k-1}(t, s, ..)] / k`. Terms of order above the
//! truncation are dropped.

use crate::linalg::{comm, CMatrix, C64};

/// Operators fixed for one stage time `tau`.
pub(crate) struct Stage<'a> {
    pub ldag: &'a CMatrix,
    pub mih: &'a CMatrix,
    pub obar0: &'a CMatrix,
    /// `L^dag Obar_0`.
    pub a: &'a CMatrix,
}

impl<'a> Stage<'a> {
    /// `[-iH, X] - [L^dag Obar_0, X]`.
    pub fn drift(&self, x: &CMatrix) -> CMatrix {
        let mut out = comm(self.mih, x);
        out -= &comm(self.a, x);
        out
    }

    /// Linearization of the quadratic term around `Obar_0`:
    /// `[-iH, X] - [L^dag Obar_0, X] - [L^dag X, Obar_0]`.
    pub fn lin(&self, x: &CMatrix) -> CMatrix {
        let mut out = self.drift(x);
        out -= &comm(&self.ldag.mul_unchecked(x), self.obar0);
        out
    }

    /// `[L^dag X, Y]`.
    pub fn ldag_comm(&self, x: &CMatrix, y: &CMatrix) -> CMatrix {
        comm(&self.ldag.mul_unchecked(x), y)
    }

    /// `L^dag X`.
    pub fn ldag_mul(&self, x: &CMatrix) -> CMatrix {
        self.ldag.mul_unchecked(x)
    }
}

pub(crate) fn raw0_rhs(st: &Stage, o0: &CMatrix, obar1_s: Option<&CMatrix>) -> CMatrix {
    let mut d = st.drift(o0);
    if let Some(p) = obar1_s {
        d -= &st.ldag_mul(p);
    }
    d
}

pub(crate) fn raw1_rhs(
    st: &Stage,
    o1: &CMatrix,
    o0_s: &CMatrix,
    obar1_s1: &CMatrix,
    obar2_s_s1: Option<&CMatrix>,
) -> CMatrix {
    let mut d = st.drift(o1);
    d -= &st.ldag_comm(obar1_s1, o0_s);
    if let Some(q) = obar2_s_s1 {
        d.axpy(C64::new(-2.0, 0.0), &st.ldag_mul(q));
    }
    d
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn raw2_rhs(
    st: &Stage,
    o2: &CMatrix,
    o0_s: &CMatrix,
    o1_s_s1: &CMatrix,
    o1_s_s2: &CMatrix,
    obar1_s1: &CMatrix,
    obar1_s2: &CMatrix,
    obar2_s1_s2: &CMatrix,
) -> CMatrix {
    let mut d = st.drift(o2);
    d -= &st.ldag_comm(obar2_s1_s2, o0_s);
    let mut sym = st.ldag_comm(obar1_s1, o1_s_s2);
    sym += &st.ldag_comm(obar1_s2, o1_s_s1);
    d.axpy(C64::new(-0.5, 0.0), &sym);
    d
}

/// Boundary value `[L, X] / k` for a line born at the current time.
pub(crate) fn boundary(l: &CMatrix, x: &CMatrix, k: usize) -> CMatrix {
    comm(l, x).scale_real(1.0 / k as f64)
}

/// Exponential-kernel closure for `alpha(t, s) = c e^{-gamma (t - s)}`.
///
/// Integrating the line equations against the kernel gives ODEs in `t`
/// alone. With `G_1 = int alpha Obar_1`, `D_2 = int alpha K` and
/// `K(s1) = int alpha(t, s) Obar_2(s, s1) ds`:
///
/// ```text
/// Obar_0' = c L - gamma Obar_0 + [-iH, Obar_0] - [L^dag Obar_0, Obar_0] - L^dag G_1
/// G_1'    = c [L, Obar_0] - 2 gamma G_1 + Lin(G_1) - 2 L^dag D_2
/// D_2'    = c [L, G_1] - 3 gamma D_2 + Lin(D_2) - [L^dag G_1, G_1]
/// ```
///
/// and for the kernel lines, with `Obar_1(s1, s1) = [L, Obar_0(s1)]`,
/// `K(s1, s1) = [L, G_1(s1)] / 2`, `Obar_2(s1, s2 = t) = [L, Obar_1(s1)] / 2`:
///
/// ```text
/// Obar_1' = -gamma Obar_1 + Lin(Obar_1) - 2 L^dag K
/// K'      = c/2 [L, Obar_1] - 2 gamma K + Lin(K) - 1/2 ([L^dag G_1, Obar_1] + [L^dag Obar_1, G_1])
/// Obar_2' = -gamma Obar_2 + Lin(Obar_2) - 1/2 ([L^dag Obar_1(s1), Obar_1(s2)] + [L^dag Obar_1(s2), Obar_1(s1)])
/// ```
pub(crate) struct Closure<'a> {
    pub l: &'a CMatrix,
    pub gamma: f64,
    pub c: f64,
}

impl Closure<'_> {
    pub fn core(
        &self,
        st: &Stage,
        g1: Option<&CMatrix>,
        d2: Option<&CMatrix>,
    ) -> (CMatrix, Option<CMatrix>, Option<CMatrix>) {
        let o = st.obar0;
        let mut d_o = self.l.scale_real(self.c);
        d_o.axpy(C64::new(-self.gamma, 0.0), o);
        d_o += &st.drift(o);
        let d_g = g1.map(|g| {
            d_o -= &st.ldag_mul(g);
            let mut d = comm(self.l, o).scale_real(self.c);
            d.axpy(C64::new(-2.0 * self.gamma, 0.0), g);
            d += &st.lin(g);
            if let Some(d2) = d2 {
                d.axpy(C64::new(-2.0, 0.0), &st.ldag_mul(d2));
            }
            d
        });
        let d_d = match (g1, d2) {
            (Some(g), Some(dd)) => {
                let mut d = comm(self.l, g).scale_real(self.c);
                d.axpy(C64::new(-3.0 * self.gamma, 0.0), dd);
                d += &st.lin(dd);
                d -= &st.ldag_comm(g, g);
                Some(d)
            }
            _ => None,
        };
        (d_o, d_g, d_d)
    }

    pub fn obar1_line(&self, st: &Stage, p1: &CMatrix, k: Option<&CMatrix>) -> CMatrix {
        let mut d = st.lin(p1);
        d.axpy(C64::new(-self.gamma, 0.0), p1);
        if let Some(k) = k {
            d.axpy(C64::new(-2.0, 0.0), &st.ldag_mul(k));
        }
        d
    }

    pub fn k_line(&self, st: &Stage, k: &CMatrix, p1: &CMatrix, g1: &CMatrix) -> CMatrix {
        let mut d = comm(self.l, p1).scale_real(0.5 * self.c);
        d.axpy(C64::new(-2.0 * self.gamma, 0.0), k);
        d += &st.lin(k);
        let mut sym = st.ldag_comm(g1, p1);
        sym += &st.ldag_comm(p1, g1);
        d.axpy(C64::new(-0.5, 0.0), &sym);
        d
    }

    pub fn obar2_line(&self, st: &Stage, p2: &CMatrix, p1_a: &CMatrix, p1_b: &CMatrix) -> CMatrix {
        let mut d = st.lin(p2);
        d.axpy(C64::new(-self.gamma, 0.0), p2);
        let mut sym = st.ldag_comm(p1_a, p1_b);
        sym += &st.ldag_comm(p1_b, p1_a);
        d.axpy(C64::new(-0.5, 0.0), &sym);
        d
    }
}
