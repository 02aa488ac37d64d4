//! Closed coefficient equations as written out by hand for individual
//! families, used to cross-check the generic projection.
//!
//! The integrator never uses these forms. [`printed_defect`] evaluates both
//! right-hand sides on the same table states and reports how far apart they
//! are. Covered forms:
//!
//! * four-level chain (`spin_l` with `2l = 3`, `spin_general` with four
//!   levels), noise orders 0 to 2, with `C_m`, `G_n` read off the model;
//! * `three_level_general` in the `J_-`, `J_z J_-`, `J_-^2` basis;
//! * noise-free channel models (`multi_transition`, `band_model`,
//!   `driven_four_level` with drives on `|2><3|` and `|3><4|` only).
//!
//! The three-level form is reproduced as printed: `d_t f_2` carries
//! `i(w_3 + w_1 - w_2) f_1` and the boundary is `p(t, s, t) = i (k_2 - k_1) f_1 / sqrt 2`.
//! Projecting the consistency condition gives `i(w_3 + w_1 - 2 w_2) f_1` and
//! an extra `-i k_2 f_2 / sqrt 2` in the boundary, so the defect vanishes
//! only when `w_2 = 0` and `k_2 f_2 = 0`. The printed `p` is `-i` times the
//! coefficient of `J_-^2`.

use super::algebra::{raw0_rhs, raw1_rhs, raw2_rhs, Stage};
use super::{CoefficientError, CoefficientTable};
use crate::linalg::{C64, I, ZERO};
use crate::models::{ModelFamily, ModelParams, ModelSpec};

/// Largest mismatch between the printed and the projected equations over a
/// subsample of stored lines, relative to the largest projected value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedDefect {
    /// Right-hand sides of the line equations.
    pub rhs: f64,
    /// Boundary values of noise lines born at `t` (zero when the form has none).
    pub boundary: f64,
    /// Number of line evaluations compared.
    pub samples: usize,
}

#[derive(Debug, Clone)]
enum Form {
    FourChain {
        c: [f64; 4],
        g: [C64; 3],
    },
    ThreeLevel {
        w: [f64; 3],
        k1: C64,
        k2: C64,
    },
    Channels {
        omegas: Vec<f64>,
        entries: Vec<(usize, usize)>,
        kappas: Vec<C64>,
        driven: bool,
    },
}

/// Component `i` of `v`, zero for orders dropped by the truncation.
fn at(v: &[C64], i: usize) -> C64 {
    v.get(i).copied().unwrap_or(ZERO)
}

/// Inputs of one line equation; slices are basis components at time `t`.
struct Line<'a> {
    /// The line itself.
    own: &'a [C64],
    /// `f(t, s)`.
    f: &'a [C64],
    /// `F(t)`.
    big_f: &'a [C64],
    /// `p^(1)(t, s, s1)` and `p^(1)(t, s, s2)`.
    p1: [&'a [C64]; 2],
    /// `P^(1)` at the noise arguments (`s` for order 0, `s1`, `s2` otherwise).
    q1: [&'a [C64]; 2],
    /// `P^(2)(t, s, s1)` for order 1, `P^(2)(t, s1, s2)` for order 2.
    q2: &'a [C64],
}

fn form(model: &ModelSpec) -> Option<Form> {
    let h = model.static_hamiltonian();
    let l = model.lindblad();
    let diag = |n: usize| (0..n).map(|k| h[(k, k)].re).collect::<Vec<_>>();
    match model.params() {
        ModelParams::SpinL { twice_l: 3, .. } | ModelParams::SpinGeneral { .. } if model.dim() == 4 => {
            let c = diag(4);
            Some(Form::FourChain {
                c: [c[0], c[1], c[2], c[3]],
                g: [l[(0, 1)], l[(1, 2)], l[(2, 3)]],
            })
        }
        ModelParams::ThreeLevelGeneral { omegas, kappas } => Some(Form::ThreeLevel {
            w: *omegas,
            k1: kappas[0],
            k2: kappas[1],
        }),
        ModelParams::MultiTransition { .. } | ModelParams::BandModel { .. } | ModelParams::DrivenFourLevel { .. } => {
            let driven = model.family() == ModelFamily::DrivenFourLevel;
            if driven
                && model
                    .drives()
                    .iter()
                    .any(|d| !matches!((d.bra, d.ket), (2, 3) | (3, 4)))
            {
                return None;
            }
            let entries = model.layout().entries(0).to_vec();
            Some(Form::Channels {
                omegas: diag(model.dim()),
                kappas: entries.iter().map(|&(r, c)| l[(r, c)]).collect(),
                entries,
                driven,
            })
        }
        _ => None,
    }
}

/// Whether a printed form exists for this model.
pub fn has_printed_form(model: &ModelSpec) -> bool {
    form(model).is_some()
}

impl Form {
    fn rhs(&self, model: &ModelSpec, t: f64, order: usize, x: &Line) -> Vec<C64> {
        match self {
            Form::FourChain { c, g } => four_chain(c, g, order, x),
            Form::ThreeLevel { w, k1, k2 } => three_level(w, *k1, *k2, order, x),
            Form::Channels {
                omegas,
                entries,
                kappas,
                driven,
            } => {
                let mut d = channels(omegas, entries, kappas, x);
                if *driven {
                    let (mut d2, mut d4) = (ZERO, ZERO);
                    for drive in model.drives() {
                        match (drive.bra, drive.ket) {
                            (2, 3) => d2 += drive.value(t),
                            _ => d4 += drive.value(t),
                        }
                    }
                    let f = |lvl: usize| {
                        entries
                            .iter()
                            .position(|&e| e == (0, lvl - 1))
                            .map_or(ZERO, |k| x.own[k])
                    };
                    for (k, &(_, col)) in entries.iter().enumerate() {
                        d[k] += match col + 1 {
                            2 => I * d2.conj() * f(3),
                            3 => I * (d2 * f(2) + d4.conj() * f(4)),
                            4 => I * d4 * f(3),
                            _ => ZERO,
                        };
                    }
                }
                d
            }
        }
    }

    /// Printed value of the order-`order` line born at `t`, given the lines
    /// one order down at `(t, s, ..)`.
    fn boundary(&self, order: usize, lower: &[C64]) -> Option<Vec<C64>> {
        match self {
            Form::FourChain { g, .. } => Some(match order {
                1 => vec![g[0] * lower[1] - g[1] * lower[0], g[1] * lower[2] - g[2] * lower[1]],
                _ => vec![(g[0] * lower[1] - g[2] * lower[0]) * 0.5],
            }),
            Form::ThreeLevel { k1, k2, .. } => {
                let f1 = lower[1] / std::f64::consts::SQRT_2;
                let p = I * (k2 - k1) / std::f64::consts::SQRT_2 * f1;
                Some(vec![2.0 * I * p])
            }
            Form::Channels { .. } => None,
        }
    }
}

fn four_chain(c: &[f64; 4], g: &[C64; 3], order: usize, x: &Line) -> Vec<C64> {
    let [g2, g3, g4] = g.map(|z| z.conj());
    let om = |a: usize, b: usize| -I * (c[a - 1] - c[b - 1]);
    let (f, ff) = (x.f, x.big_f);
    match order {
        0 => {
            let p = x.q1[0];
            vec![
                om(1, 2) * f[0] + g2 * f[0] * ff[0],
                om(2, 3) * f[1] + g3 * f[1] * ff[1] - g2 * f[1] * ff[0] - g2 * at(p, 0),
                om(3, 4) * f[2] + g4 * f[2] * ff[2] - g3 * f[2] * ff[1] - g3 * at(p, 1),
            ]
        }
        1 => {
            let (p, q) = (x.own, x.q1[0]);
            vec![
                om(1, 3) * p[0] + g2 * f[0] * at(q, 0) + g3 * ff[1] * p[0],
                om(2, 4) * p[1] + g3 * f[1] * at(q, 1) + g4 * ff[2] * p[1]
                    - g2 * ff[0] * p[1]
                    - g2 * f[2] * at(q, 0)
                    - 2.0 * g2 * at(x.q2, 0),
            ]
        }
        _ => {
            let q = x.own[0];
            let sym = 0.5 * (x.q1[0][1] * x.p1[1][0] + x.q1[1][1] * x.p1[0][0]);
            vec![om(1, 4) * q + g2 * f[0] * x.q2[0] + g3 * sym + g4 * ff[2] * q]
        }
    }
}

fn three_level(w: &[f64; 3], k1: C64, k2: C64, order: usize, x: &Line) -> Vec<C64> {
    let r2 = std::f64::consts::SQRT_2;
    let (k1, k2) = (k1.conj(), k2.conj());
    // Components are (|1><2|, |2><3|) and |1><3|.
    let split = |c: &[C64]| (c[1] / r2, (c[1] - c[0]) / r2);
    let (f1, f2) = split(x.f);
    let (big_f1, big_f2) = split(x.big_f);
    let printed_p = |c: C64| -I * c * 0.5;
    match order {
        0 => {
            let big_p = printed_p(at(x.q1[0], 0));
            let d1 = I * (w[2] - w[1]) * f1 - r2 * ((k1 - k2) * big_f1 - k1 * big_f2) * f1 - r2 * I * k1 * big_p;
            let d2 = I * (w[2] + w[0] - w[1]) * f1 - r2 * I * k1 * big_p
                + I * (w[1] - w[0]) * f2
                + r2 * k1 * (big_f1 - big_f2) * f2
                - r2 * ((2.0 * k1 - k2) * big_f1 - 2.0 * k1 * big_f2) * f1;
            vec![r2 * (d1 - d2), r2 * d1]
        }
        _ => {
            let p = printed_p(x.own[0]);
            let big_p = printed_p(at(x.q1[0], 0));
            let dp = I * (w[2] - w[0]) * p + r2 * k2 * big_f1 * p + r2 * k1 * big_p * (f1 - f2);
            vec![2.0 * I * dp]
        }
    }
}

fn channels(omegas: &[f64], entries: &[(usize, usize)], kappas: &[C64], x: &Line) -> Vec<C64> {
    let at = |j: usize, k: usize, v: &[C64]| entries.iter().position(|&e| e == (j, k)).map_or(ZERO, |i| v[i]);
    entries
        .iter()
        .enumerate()
        .map(|(i, &(j, k))| {
            let mut d = I * (omegas[k] - omegas[j]) * x.own[i];
            for (&(jp, kp), &kappa) in entries.iter().zip(kappas) {
                d += at(j, kp, x.own) * kappa.conj() * at(jp, k, x.big_f);
            }
            d
        })
        .collect()
}

/// Evenly spaced subsample of `0..=n` with at most `count` points.
fn sample(n: usize, count: usize) -> Vec<usize> {
    let step = n / count.max(1) + 1;
    let mut v: Vec<usize> = (0..=n).step_by(step).collect();
    if *v.last().unwrap() != n {
        v.push(n);
    }
    v
}

/// Compares the printed equations with the projected consistency condition
/// on the stored lines of `table` (which needs [`TableDetail::Full`]).
/// Returns `None` for models without a printed form.
///
/// [`TableDetail::Full`]: super::TableDetail::Full
pub fn printed_defect(model: &ModelSpec, table: &CoefficientTable) -> Result<Option<PrintedDefect>, CoefficientError> {
    let Some(form) = form(model) else {
        return Ok(None);
    };
    if !table.has_raw() {
        return Err(CoefficientError::Missing("raw coefficient lines"));
    }
    let layout = table.layout();
    let order = table.order();
    let grid = table.grid();
    let l = model.lindblad();
    let ldag = l.adjoint();
    let empty: &[C64] = &[];
    let mut worst: f64 = 0.0;
    let mut bworst: f64 = 0.0;
    let mut scale: f64 = f64::MIN_POSITIVE;
    let mut samples = 0;
    let mut compare = |printed: Vec<C64>, derived: &[C64], worst: &mut f64| {
        for (a, b) in printed.iter().zip(derived) {
            *worst = worst.max((a - b).norm());
            scale = scale.max(b.norm());
        }
    };

    for n in sample(grid.n_steps(), 24) {
        let t = grid.time(n);
        let mih = model.minus_i_h(t);
        let obar0 = table.obar0_matrix(n);
        let a = ldag.mul_unchecked(&obar0);
        let st = Stage {
            ldag: &ldag,
            mih: &mih,
            obar0: &obar0,
            a: &a,
        };
        let big_f = table.obar0(n);
        let q1 = |s1: usize| table.obar1(n, s1).unwrap_or(empty);
        let q2 = |s1: usize, s2: usize| {
            if order >= 2 {
                table.obar2(n, s1, s2).unwrap_or(empty)
            } else {
                empty
            }
        };
        let m1 = |s1: usize| layout.expand(1, q1(s1));
        let m2 = |s1: usize, s2: usize| layout.expand(2, q2(s1, s2));
        let ss = sample(n, 6);
        for &s in &ss {
            let f = table.raw_f(n, s).expect("raw lines present");
            let o0 = layout.expand(0, f);
            let ob1 = (order >= 1).then(|| m1(s));
            let derived = layout.project(0, &raw0_rhs(&st, &o0, ob1.as_ref())).0;
            let line = Line {
                own: f,
                f,
                big_f,
                p1: [empty, empty],
                q1: [if order >= 1 { q1(s) } else { empty }, empty],
                q2: empty,
            };
            compare(form.rhs(model, t, 0, &line), &derived, &mut worst);
            samples += 1;
            if order == 0 {
                continue;
            }
            if let Some(b) = form.boundary(1, f) {
                compare(b, table.raw_p1(n, s, n).unwrap(), &mut bworst);
            }
            for &s1 in &ss {
                let p = table.raw_p1(n, s, s1).unwrap();
                let ob2 = (order >= 2).then(|| m2(s, s1));
                let derived = layout
                    .project(1, &raw1_rhs(&st, &layout.expand(1, p), &o0, &m1(s1), ob2.as_ref()))
                    .0;
                let line = Line {
                    own: p,
                    f,
                    big_f,
                    p1: [p, empty],
                    q1: [q1(s1), empty],
                    q2: q2(s, s1),
                };
                compare(form.rhs(model, t, 1, &line), &derived, &mut worst);
                samples += 1;
                if order < 2 {
                    continue;
                }
                if let Some(b) = form.boundary(2, p) {
                    compare(b, table.raw_p2(n, s, s1, n).unwrap(), &mut bworst);
                }
                for &s2 in ss.iter().filter(|&&s2| s2 >= s1) {
                    let p2 = table.raw_p2(n, s, s1, s2).unwrap();
                    let pb = table.raw_p1(n, s, s2).unwrap();
                    let derived = layout
                        .project(
                            2,
                            &raw2_rhs(
                                &st,
                                &layout.expand(2, p2),
                                &o0,
                                &layout.expand(1, p),
                                &layout.expand(1, pb),
                                &m1(s1),
                                &m1(s2),
                                &m2(s1, s2),
                            ),
                        )
                        .0;
                    let line = Line {
                        own: p2,
                        f,
                        big_f,
                        p1: [p, pb],
                        q1: [q1(s1), q1(s2)],
                        q2: q2(s1, s2),
                    };
                    compare(form.rhs(model, t, 2, &line), &derived, &mut worst);
                    samples += 1;
                }
            }
        }
    }
    Ok(Some(PrintedDefect {
        rhs: worst / scale,
        boundary: bworst / scale,
        samples,
    }))
}
