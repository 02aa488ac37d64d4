use super::assemble::assemble_to;
use super::{CoefficientError, CoefficientTable};
use crate::linalg::{comm, C64, ZERO};
use crate::models::ModelSpec;
use crate::noise::NoiseRealization;

/// Mismatch between the two sides of the consistency condition at one
/// `(t, s)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `norm_max(d_t O - RHS)`.
    pub absolute: f64,
    /// `absolute / max(norm_max(d_t O), norm_max(O))`.
    pub relative: f64,
    /// The point is near `t = s` or the end of the grid, where the time
    /// derivative of the line born at `s` needs a one-sided stencil. Lines
    /// born at inner quadrature nodes close to `t` always do, and are not
    /// counted here.
    pub one_sided: bool,
}

/// Weights of the first derivative at `x0` of the Lagrange interpolant
/// through integer nodes `xs`.
fn derivative_weights(xs: &[i64], x0: i64) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|j| {
            let mut total = 0.0;
            for m in 0..n {
                if m == j {
                    continue;
                }
                let mut prod = 1.0 / (xs[j] - xs[m]) as f64;
                for k in 0..n {
                    if k != j && k != m {
                        prod *= (x0 - xs[k]) as f64 / (xs[j] - xs[k]) as f64;
                    }
                }
                total += prod;
            }
            total
        })
        .collect()
}

/// Up to five stencil nodes around `n` inside `[birth, last]`.
fn stencil(n: usize, birth: usize, last: usize) -> Option<(Vec<usize>, Vec<f64>, bool)> {
    let avail = last - birth + 1;
    if avail < 2 {
        return None;
    }
    let width = avail.min(5);
    let lo = n.saturating_sub(width / 2).max(birth).min(last + 1 - width);
    let nodes: Vec<usize> = (lo..lo + width).collect();
    let xs: Vec<i64> = nodes.iter().map(|&k| k as i64).collect();
    let w = derivative_weights(&xs, n as i64);
    let centered = width == 5 && lo + 2 == n;
    Some((nodes, w, !centered))
}

/// Evaluates both sides of the consistency condition
/// `d_t O(t, s, w) = [-iH + L w_t - L^dag Obar(t, w), O] - L^dag dObar/dw_s`
/// at grid indices `(n, m)`, `m <= n`, for the noise `w` of `probe`.
///
/// `O` and `Obar` are rebuilt from the table by trapezoid quadrature over
/// `[0, t_n]`; `d_t O` differentiates each stored line by a five-point
/// stencil and adds the boundary terms produced by the moving upper limit.
/// The functional derivative strips one noise integral from `Obar`.
pub fn consistency_residual(
    model: &ModelSpec,
    table: &CoefficientTable,
    probe: &NoiseRealization,
    n: usize,
    m: usize,
) -> Result<ResidualReport, CoefficientError> {
    if !table.has_raw() {
        return Err(CoefficientError::Missing("raw coefficient lines"));
    }
    let grid = table.grid();
    if probe.grid() != grid {
        return Err(CoefficientError::GridMismatch {
            table: grid.n_steps(),
            input: probe.grid().n_steps(),
        });
    }
    if m > n || n > grid.n_steps() {
        return Err(CoefficientError::OutOfRange(format!(
            "need s <= t <= t_max, got s index {m}, t index {n}"
        )));
    }
    let last = grid.n_steps();
    let dt = grid.dt();
    let w = probe.values();
    let layout = table.layout();
    let order = table.order();
    let q = |k: usize| {
        if n == 0 {
            0.0
        } else if k == 0 || k == n {
            0.5 * dt
        } else {
            dt
        }
    };
    let deriv = |get: &dyn Fn(usize) -> Vec<C64>, birth: usize| -> Result<Vec<C64>, CoefficientError> {
        let (nodes, weights, _) = stencil(n, birth, last)
            .ok_or_else(|| CoefficientError::OutOfRange(format!("line born at index {birth} has a single point")))?;
        let mut acc: Vec<C64> = Vec::new();
        for (&k, &wt) in nodes.iter().zip(&weights) {
            let v = get(k);
            if acc.is_empty() {
                acc = vec![ZERO; v.len()];
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x * (wt / dt);
            }
        }
        Ok(acc)
    };

    let one_sided = stencil(n, m, last).map_or(true, |s| s.2);

    // O(t_n, s_m, w) and its time derivative.
    let mut o = layout.expand(0, table.raw_f(n, m).unwrap());
    let mut lhs = layout.expand(0, &deriv(&|k| table.raw_f(k, m).unwrap().to_vec(), m)?);
    if order >= 1 {
        let p1 = |k: usize, s1: usize| table.raw_p1(k, m, s1).unwrap().to_vec();
        let mut acc = vec![ZERO; table.components(1)];
        let mut dacc = acc.clone();
        for s1 in 0..=n {
            let weight = w[s1] * q(s1);
            let d = deriv(&|k| p1(k, s1), m.max(s1))?;
            for ((a, da), (x, dx)) in acc.iter_mut().zip(dacc.iter_mut()).zip(p1(n, s1).into_iter().zip(d)) {
                *a += x * weight;
                *da += dx * weight;
            }
        }
        o += &layout.expand(1, &acc);
        lhs += &layout.expand(1, &dacc);
        lhs += &layout.expand(1, &p1(n, n)).scale(w[n]);
    }
    if order >= 2 {
        let p2 = |k: usize, s1: usize, s2: usize| table.raw_p2(k, m, s1, s2).unwrap().to_vec();
        let mut acc = vec![ZERO; table.components(2)];
        let mut dacc = acc.clone();
        let mut bnd = acc.clone();
        for s2 in 0..=n {
            for s1 in 0..=s2 {
                let mult = if s1 == s2 { 1.0 } else { 2.0 };
                let weight = w[s1] * w[s2] * (q(s1) * q(s2) * mult);
                let d = deriv(&|k| p2(k, s1, s2), m.max(s2))?;
                for ((a, da), (x, dx)) in acc
                    .iter_mut()
                    .zip(dacc.iter_mut())
                    .zip(p2(n, s1, s2).into_iter().zip(d))
                {
                    *a += x * weight;
                    *da += dx * weight;
                }
            }
            let bw = w[s2] * (2.0 * q(s2)) * w[n];
            for (b, x) in bnd.iter_mut().zip(p2(n, s2, n)) {
                *b += x * bw;
            }
        }
        o += &layout.expand(2, &acc);
        lhs += &layout.expand(2, &dacc);
        lhs += &layout.expand(2, &bnd);
    }

    // Right-hand side with the tabulated memory integrals.
    let l = model.lindblad();
    let ldag = l.adjoint();
    let obar = assemble_to(table, w, n, table.order())?;
    let mut gen = model.minus_i_h(grid.time(n));
    gen.axpy(w[n], l);
    gen -= &ldag.mul_unchecked(&obar);
    let mut rhs = comm(&gen, &o);
    if order >= 1 {
        let mut dobar = layout.expand(1, table.obar1(n, m).unwrap());
        if order >= 2 {
            let mut acc = vec![ZERO; table.components(2)];
            for s1 in 0..=n {
                let weight = w[s1] * (2.0 * q(s1));
                for (a, &x) in acc.iter_mut().zip(table.obar2(n, m, s1).unwrap()) {
                    *a += x * weight;
                }
            }
            dobar += &layout.expand(2, &acc);
        }
        rhs -= &ldag.mul_unchecked(&dobar);
    }
    let absolute = (&lhs - &rhs).norm_max();
    let scale = lhs.norm_max().max(o.norm_max()).max(f64::MIN_POSITIVE);
    Ok(ResidualReport {
        absolute,
        relative: absolute / scale,
        one_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_weights() {
        let w = derivative_weights(&[-2, -1, 0, 1, 2], 0);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = derivative_weights(&[0, 1, 2, 3, 4], 0);
        let expect = [-25.0, 48.0, -36.0, 16.0, -3.0].map(|x| x / 12.0);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn stencil_placement() {
        let (nodes, _, flag) = stencil(10, 0, 20).unwrap();
        assert_eq!(nodes, vec![8, 9, 10, 11, 12]);
        assert!(!flag);
        let (nodes, _, flag) = stencil(10, 10, 20).unwrap();
        assert_eq!(nodes, vec![10, 11, 12, 13, 14]);
        assert!(flag);
        let (nodes, _, _) = stencil(20, 0, 20).unwrap();
        assert_eq!(nodes, vec![16, 17, 18, 19, 20]);
        assert!(stencil(20, 20, 20).is_none());
    }
}
