//! Small dense complex linear algebra.
//!
//! Every operator in the simulator is a dense `CMatrix` of dimension at most a
//! few dozen. The norm used throughout for tolerances is the largest absolute
//! entry ([`CMatrix::norm_max`]).

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Complex scalar type used across the crate.
pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare { op: &'static str, rows: usize, cols: usize },
    #[error("matrix is not Hermitian: residual {residual:e} exceeds {tolerance:e}")]
    NotHermitian { residual: f64, tolerance: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("empty dimension")]
    Empty,
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                op: "from_row_major",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(LinalgError::NonFinite("from_row_major"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// The matrix unit `|row><col|` (zero-based indices).
    pub fn unit(n: usize, row: usize, col: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(row, col)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Dimension of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * a).collect(),
        }
    }

    pub fn scale_real(&self, a: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * a).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &CMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|z| *z = ZERO);
    }

    /// Largest absolute entry; the norm used for every tolerance in the crate.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// `norm_max(self - self^dagger)`.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Product without a shape check; panics in debug builds on mismatch.
    /// Zero entries of the left factor are skipped, which pays off for the
    /// ladder-structured operators the models produce.
    pub fn mul_unchecked(&self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.cols, rhs.rows);
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for r in 0..self.rows {
            let out_row = &mut out.data[r * n..(r + 1) * n];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &CMatrix) -> CMatrix {
        let (ar, ac) = self.shape();
        let (br, bc) = rhs.shape();
        CMatrix::from_fn(ar * br, ac * bc, |r, c| self[(r / br, c / bc)] * rhs[(r % br, c % bc)])
    }

    pub fn pow(&self, k: u32) -> CMatrix {
        let mut out = CMatrix::identity(self.dim());
        for _ in 0..k {
            out = out.mul_unchecked(self);
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        self.mul_unchecked(rhs)
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape mismatch");
        for (x, &y) in self.data.iter_mut().zip(&rhs.data) {
            *x += y;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape mismatch");
        for (x, &y) in self.data.iter_mut().zip(&rhs.data) {
            *x -= y;
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

/// Checked matrix product.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.mul_unchecked(b))
}

/// Checked commutator `ab - ba`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "commutator",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(comm(a, b))
}

/// Unchecked commutator for the integrators' inner loops.
pub(crate) fn comm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = a.mul_unchecked(b);
    out -= &b.mul_unchecked(a);
    out
}

/// Pure state amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self, LinalgError> {
        if amps.is_empty() {
            return Err(LinalgError::Empty);
        }
        if amps.iter().any(|z| !z.is_finite()) {
            return Err(LinalgError::NonFinite("state vector"));
        }
        Ok(Self { amps })
    }

    pub(crate) fn from_vec_unchecked(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    /// Basis state with a one at the zero-based `index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self, LinalgError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(LinalgError::NonFinite("normalization"));
        }
        Ok(Self {
            amps: self.amps.iter().map(|z| z / n).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.is_finite())
    }

    /// `<self|a|self>` without normalization.
    pub fn expectation(&self, a: &CMatrix) -> C64 {
        let av = a.mul_vec(&self.amps);
        self.amps.iter().zip(&av).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(x, y)| x.conj() * y).sum()
    }

    /// `|self><self|`.
    pub fn projector(&self) -> DensityMatrix {
        let n = self.dim();
        DensityMatrix {
            m: CMatrix::from_fn(n, n, |r, c| self.amps[r] * self.amps[c].conj()),
        }
    }
}

/// Reduced density matrix. Construction checks shape and finiteness; physical
/// properties (trace, positivity) are checked by the code that needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn from_matrix(m: CMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                op: "density matrix",
                rows: m.rows,
                cols: m.cols,
            });
        }
        if !m.is_finite() {
            return Err(LinalgError::NonFinite("density matrix"));
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn pure(psi: &StateVector) -> Self {
        psi.projector()
    }

    pub fn dim(&self) -> usize {
        self.m.rows
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.m.hermiticity_residual()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    pub fn eigvals(&self) -> Result<Vec<f64>, LinalgError> {
        eigvals_hermitian(&self.m)
    }
}

/// Eigenvalues of a Hermitian matrix in descending order (cyclic complex
/// Jacobi). The Hermiticity tolerance is `1e-10 * max(1, norm_max)`.
pub fn eigvals_hermitian(m: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            op: "eigvals_hermitian",
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite("eigvals_hermitian"));
    }
    let scale = m.norm_max();
    let tolerance = 1e-10 * scale.max(1.0);
    let residual = m.hermiticity_residual();
    if residual > tolerance {
        return Err(LinalgError::NotHermitian { residual, tolerance });
    }
    let n = m.rows;
    // Work on the exactly Hermitian part.
    let mut a = CMatrix::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)].conj()));
    let total: f64 = a.as_slice().iter().map(|z| z.norm_sqr()).sum();
    const MAX_SWEEPS: usize = 100;
    let mut converged = n < 2 || total == 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)].norm_sqr())
            .sum();
        if off <= 1e-30 * total {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut a, p, q);
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)].norm_sqr())
            .sum();
        if off > 1e-24 * total {
            return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// One two-sided rotation zeroing `a[p][q]`.
fn jacobi_rotate(a: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let n = a.rows;
    let phase = apq / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
    let (s, c) = theta.sin_cos();
    let e_minus = phase.conj();
    // U restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]].
    for r in 0..n {
        let xp = a[(r, p)];
        let xq = a[(r, q)];
        a[(r, p)] = xp * c - xq * e_minus * s;
        a[(r, q)] = xp * s + xq * e_minus * c;
    }
    let e_plus = phase;
    for col in 0..n {
        let xp = a[(p, col)];
        let xq = a[(q, col)];
        a[(p, col)] = xp * c - xq * e_plus * s;
        a[(q, col)] = xp * s + xq * e_plus * c;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lowering(n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |r, col| if col == r + 1 { ONE } else { ZERO })
    }

    #[test]
    fn identity_is_neutral() {
        let m = CMatrix::from_fn(4, 4, |r, col| c(r as f64 - 0.5, col as f64 * 0.25));
        assert_eq!(matmul(&CMatrix::identity(4), &m).unwrap(), m);
    }

    #[test]
    fn ladder_is_nilpotent() {
        let s = lowering(2);
        assert_eq!(s.pow(2), CMatrix::zeros(2, 2));
        let j = CMatrix::from_fn(4, 4, |r, col| {
            if col == r + 1 {
                C64::from([3f64.sqrt(), 2.0, 3f64.sqrt()][r])
            } else {
                ZERO
            }
        });
        assert!(j.pow(3).norm_max() > 0.0);
        assert_eq!(j.pow(4), CMatrix::zeros(4, 4));
    }

    #[test]
    fn shape_errors() {
        let a = CMatrix::zeros(2, 3);
        let b = CMatrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(LinalgError::DimensionMismatch { .. })));
        assert!(commutator(&a, &b).is_err());
        assert!(commutator(&CMatrix::zeros(2, 2), &CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn unit_commutator_rule() {
        // [|m><m|, |j><j+k+1|] = |j><j+k+1| (delta_{jm} - delta_{j+k+1,m})
        let n = 5;
        for k in 0..3 {
            for j in 0..n - k - 1 {
                let op = CMatrix::unit(n, j, j + k + 1);
                for m in 0..n {
                    let got = commutator(&CMatrix::unit(n, m, m), &op).unwrap();
                    let coef = (m == j) as i32 - (m == j + k + 1) as i32;
                    assert_eq!(got, op.scale_real(coef as f64));
                }
            }
        }
    }

    #[test]
    fn eigvals_simple() {
        let d = CMatrix::from_real_diagonal(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(eigvals_hermitian(&d).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let q = CMatrix::identity(4).scale_real(0.25);
        assert_eq!(eigvals_hermitian(&q).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn eigvals_two_by_two_closed_form() {
        let (a, d, b) = (0.3, -1.1, c(0.4, -0.7));
        let m = CMatrix::from_row_major(2, 2, vec![c(a, 0.0), b, b.conj(), c(d, 0.0)]).unwrap();
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let got = eigvals_hermitian(&m).unwrap();
        assert!((got[0] - (mean + rad)).abs() < 1e-14);
        assert!((got[1] - (mean - rad)).abs() < 1e-14);
    }

    #[test]
    fn eigvals_rejects_non_hermitian() {
        let m = lowering(3);
        assert!(matches!(eigvals_hermitian(&m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn projector_and_expectation() {
        let psi = StateVector::new(vec![c(0.5, 0.0); 4]).unwrap();
        let rho = psi.projector();
        assert!((rho.entry(0, 3).norm() - 0.25).abs() < 1e-15);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
        let h = CMatrix::from_real_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        assert!((psi.expectation(&h).re - 2.5).abs() < 1e-15);
    }

    #[test]
    fn kron_shapes() {
        let a = lowering(2);
        let b = CMatrix::identity(3);
        let k = a.kron(&b);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k[(0, 3)], ONE);
        assert_eq!(k[(2, 5)], ONE);
        assert_eq!(k[(3, 0)], ZERO);
    }
}
