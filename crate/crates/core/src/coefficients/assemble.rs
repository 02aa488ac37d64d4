use super::{CoefficientError, CoefficientTable};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::noise::NoiseRealization;

/// `Obar(t_n, z*)` by trapezoid quadrature of the tabulated kernels against
/// a noise realization on the table's grid.
pub fn assemble_obar(
    table: &CoefficientTable,
    noise: &NoiseRealization,
    n: usize,
) -> Result<CMatrix, CoefficientError> {
    if noise.grid() != table.grid() {
        return Err(CoefficientError::GridMismatch {
            table: table.grid().n_steps(),
            input: noise.grid().n_steps(),
        });
    }
    assemble_obar_values(table, noise.values(), n)
}

/// As [`assemble_obar`], reading samples `values[0..=n]` (the noise seen by
/// the trajectory so far, possibly shifted). Keeps noise terms up to
/// [`CoefficientTable::noise_order`].
pub fn assemble_obar_values(table: &CoefficientTable, values: &[C64], n: usize) -> Result<CMatrix, CoefficientError> {
    assemble_to(table, values, n, table.noise_order())
}

/// Keeps noise terms up to `order`, which must not exceed the table's.
pub(crate) fn assemble_to(
    table: &CoefficientTable,
    values: &[C64],
    n: usize,
    order: usize,
) -> Result<CMatrix, CoefficientError> {
    if n >= table.grid().len() {
        return Err(CoefficientError::OutOfRange(format!(
            "time index {n} beyond table of {} points",
            table.grid().len()
        )));
    }
    if values.len() <= n {
        return Err(CoefficientError::OutOfRange(format!(
            "noise history has {} samples, need {}",
            values.len(),
            n + 1
        )));
    }
    let mut obar = table.obar0_matrix(n);
    if order == 0 || n == 0 {
        return Ok(obar);
    }
    if !table.has_kernels() {
        return Err(CoefficientError::Missing("noise kernels P(t, s)"));
    }
    let layout = table.layout();
    let dt = table.grid().dt();
    let q = |m: usize| if m == 0 || m == n { 0.5 * dt } else { dt };

    let mut acc1 = vec![ZERO; table.components(1)];
    for s1 in 0..=n {
        let w = values[s1] * q(s1);
        for (a, &p) in acc1.iter_mut().zip(table.obar1(n, s1).expect("kernels present")) {
            *a += p * w;
        }
    }
    obar += &layout.expand(1, &acc1);

    if order >= 2 {
        let mut acc2 = vec![ZERO; table.components(2)];
        for s2 in 0..=n {
            let w2 = values[s2] * q(s2);
            for s1 in 0..=s2 {
                let mult = if s1 == s2 { 1.0 } else { 2.0 };
                let w = values[s1] * q(s1) * w2 * mult;
                for (a, &p) in acc2.iter_mut().zip(table.obar2(n, s1, s2).expect("kernels present")) {
                    *a += p * w;
                }
            }
        }
        obar += &layout.expand(2, &acc2);
    }
    Ok(obar)
}
