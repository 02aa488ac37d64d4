//! Model families: system Hamiltonian, Lindblad operator and the operator
//! basis that the O-operator expansion lives in.
//!
//! Levels are numbered from 1 in parameter lists and drive terms, and stored
//! at zero-based index `level - 1`. Level 1 is the ground state: for spin
//! models it is the lowest `J_z` eigenvalue `-l`, and `L = J_-` moves
//! population from level `n` down to level `n - 1`, so `L` is strictly upper
//! triangular and `O_j^(k) = |j><j+k+1|` sits on the `(k+1)`-th superdiagonal.

use std::fmt;

use crate::linalg::{CMatrix, C64, I, ZERO};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("drive on levels ({bra}, {ket}) overlaps a dissipative channel; no noise-free O-operator exists")]
    DriveOnChannel { bra: usize, ket: usize },
    #[error("Lindblad operator contains the transition cycle {0:?}; no noise-free O-operator exists")]
    TransitionCycle((usize, usize, usize)),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    SpinL,
    ThreeLevelGeneral,
    SpinGeneral,
    DrivenFourLevel,
    MultiTransition,
    BandModel,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        Self::SpinL,
        Self::ThreeLevelGeneral,
        Self::SpinGeneral,
        Self::DrivenFourLevel,
        Self::MultiTransition,
        Self::BandModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SpinL => "spin_l",
            Self::ThreeLevelGeneral => "three_level_general",
            Self::SpinGeneral => "spin_general",
            Self::DrivenFourLevel => "driven_four_level",
            Self::MultiTransition => "multi_transition",
            Self::BandModel => "band_model",
        }
    }

    /// Accepts the canonical names plus `spin_3half_general`.
    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "spin_3half_general" => Ok(Self::SpinGeneral),
            _ => Self::ALL
                .into_iter()
                .find(|f| f.name() == name)
                .ok_or_else(|| ModelError::UnknownFamily(name.to_string())),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::SpinL => "spin-l ladder, H = omega J_z, L = J_-",
            Self::ThreeLevelGeneral => "three-level chain, L = k1|1><2| + k2|2><3|",
            Self::SpinGeneral => "arbitrary chain, H = sum C_m|m><m|, L = sum G_n|n-1><n|",
            Self::DrivenFourLevel => "four-level atom, decay to |1>, drives on (2,3) and (3,4)",
            Self::MultiTransition => "N levels, top level decays into every lower level",
            Self::BandModel => "upper band decays into lower band, no intra-band transitions",
        }
    }

    /// Whether the exact O-operator has noise-dependent terms.
    pub fn is_chain(self) -> bool {
        matches!(self, Self::SpinL | Self::ThreeLevelGeneral | Self::SpinGeneral)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `amplitude * e^{i frequency t} |bra><ket|` plus its Hermitian conjugate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveTerm {
    pub bra: usize,
    pub ket: usize,
    pub amplitude: C64,
    pub frequency: f64,
}

impl DriveTerm {
    pub fn new(bra: usize, ket: usize, amplitude: C64, frequency: f64) -> Result<Self, ModelError> {
        if bra == ket || bra == 0 || ket == 0 {
            return Err(invalid(
                "drive",
                format!("levels must be distinct and start at 1, got ({bra}, {ket})"),
            ));
        }
        if !amplitude.is_finite() || !frequency.is_finite() {
            return Err(invalid("drive", "non-finite amplitude or frequency"));
        }
        Ok(Self {
            bra,
            ket,
            amplitude,
            frequency,
        })
    }

    pub fn value(&self, t: f64) -> C64 {
        self.amplitude * (I * (self.frequency * t)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    SpinL {
        twice_l: u32,
        omega: f64,
    },
    ThreeLevelGeneral {
        omegas: [f64; 3],
        kappas: [C64; 2],
    },
    SpinGeneral {
        c: Vec<f64>,
        g: Vec<C64>,
    },
    DrivenFourLevel {
        omegas: [f64; 4],
        kappas: [C64; 3],
        drives: Vec<DriveTerm>,
    },
    MultiTransition {
        omegas: Vec<f64>,
        kappas: Vec<C64>,
    },
    BandModel {
        omegas: Vec<f64>,
        lower: usize,
        kappas: Vec<Vec<C64>>,
    },
}

/// Operators `O_j^(k)` grouped by noise order; each entry is the zero-based
/// `(row, col)` of a matrix unit.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisLayout {
    dim: usize,
    orders: Vec<Vec<(usize, usize)>>,
    masks: Vec<Vec<bool>>,
}

/// One basis operator with its paper-style labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisOp {
    pub order: usize,
    /// One-based index within its order.
    pub j: usize,
    pub row: usize,
    pub col: usize,
}

impl BasisLayout {
    fn new(dim: usize, orders: Vec<Vec<(usize, usize)>>) -> Self {
        let masks = orders
            .iter()
            .map(|ops| {
                let mut mask = vec![false; dim * dim];
                for &(r, c) in ops {
                    mask[r * dim + c] = true;
                }
                mask
            })
            .collect();
        Self { dim, orders, masks }
    }

    /// Chain layout `O_j^(k) = |j><j+k+1|`, `k = 0..dim-2`.
    pub fn chain(dim: usize) -> Self {
        let orders = (0..dim.saturating_sub(1))
            .map(|k| (0..dim - k - 1).map(|j| (j, j + k + 1)).collect())
            .collect();
        Self::new(dim, orders)
    }

    /// Single order-0 list.
    pub fn noise_free(dim: usize, entries: Vec<(usize, usize)>) -> Self {
        Self::new(dim, vec![entries])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest order present.
    pub fn max_order(&self) -> usize {
        self.orders.len().saturating_sub(1)
    }

    pub fn count(&self, order: usize) -> usize {
        self.orders.get(order).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.orders.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.orders.iter().map(Vec::len).sum()
    }

    pub fn entries(&self, order: usize) -> &[(usize, usize)] {
        self.orders.get(order).map_or(&[], Vec::as_slice)
    }

    pub fn ops(&self) -> impl Iterator<Item = BasisOp> + '_ {
        self.orders.iter().enumerate().flat_map(|(k, ops)| {
            ops.iter().enumerate().map(move |(j, &(row, col))| BasisOp {
                order: k,
                j: j + 1,
                row,
                col,
            })
        })
    }

    pub fn operator(&self, order: usize, j: usize) -> CMatrix {
        let (r, c) = self.orders[order][j];
        CMatrix::unit(self.dim, r, c)
    }

    /// `sum_j comps[j] O_j^(order)`.
    pub fn expand(&self, order: usize, comps: &[C64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        self.expand_into(order, comps, &mut m);
        m
    }

    pub(crate) fn expand_into(&self, order: usize, comps: &[C64], out: &mut CMatrix) {
        out.fill_zero();
        for (&(r, c), &z) in self.orders[order].iter().zip(comps) {
            out[(r, c)] = z;
        }
    }

    /// Components of `m` on the order-`order` operators, and the largest
    /// entry of `m` outside their span.
    pub fn project(&self, order: usize, m: &CMatrix) -> (Vec<C64>, f64) {
        let mut comps = vec![ZERO; self.count(order)];
        let leak = self.project_into(order, m, &mut comps);
        (comps, leak)
    }

    pub(crate) fn project_into(&self, order: usize, m: &CMatrix, comps: &mut [C64]) -> f64 {
        for (z, &(r, c)) in comps.iter_mut().zip(&self.orders[order]) {
            *z = m[(r, c)];
        }
        let mask = &self.masks[order];
        m.as_slice()
            .iter()
            .zip(mask)
            .filter(|(_, &inside)| !inside)
            .map(|(z, _)| z.norm())
            .fold(0.0, f64::max)
    }
}

/// A fully built model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    dim: usize,
    family: ModelFamily,
    params: ModelParams,
    static_h: CMatrix,
    drives: Vec<DriveTerm>,
    lindblad: CMatrix,
    noise_order_exact: usize,
    layout: BasisLayout,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lindblad(&self) -> &CMatrix {
        &self.lindblad
    }

    pub fn drives(&self) -> &[DriveTerm] {
        &self.drives
    }

    pub fn static_hamiltonian(&self) -> &CMatrix {
        &self.static_h
    }

    pub fn noise_order_exact(&self) -> usize {
        self.noise_order_exact
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.drives.is_empty()
    }

    /// `H_sys(t)`.
    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let mut h = self.static_h.clone();
        for d in &self.drives {
            let v = d.value(t);
            h[(d.bra - 1, d.ket - 1)] += v;
            h[(d.ket - 1, d.bra - 1)] += v.conj();
        }
        h
    }

    /// `-i H_sys(t)`.
    pub fn minus_i_h(&self, t: f64) -> CMatrix {
        self.hamiltonian(t).scale(-I)
    }
}

/// Basis layout of a model.
pub fn enumerate_basis(model: &ModelSpec) -> BasisLayout {
    model.layout.clone()
}

fn check_finite(name: &'static str, xs: impl IntoIterator<Item = C64>) -> Result<(), ModelError> {
    if xs.into_iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(invalid(name, "non-finite value"))
    }
}

fn real(xs: &[f64]) -> impl Iterator<Item = C64> + '_ {
    xs.iter().map(|&x| C64::new(x, 0.0))
}

fn chain_model(family: ModelFamily, params: ModelParams, c: &[f64], g: &[C64]) -> ModelSpec {
    let dim = c.len();
    let mut l = CMatrix::zeros(dim, dim);
    for (n, &gn) in g.iter().enumerate() {
        l[(n, n + 1)] = gn;
    }
    ModelSpec {
        dim,
        family,
        params,
        static_h: CMatrix::from_real_diagonal(c),
        drives: Vec::new(),
        lindblad: l,
        noise_order_exact: dim - 2,
        layout: BasisLayout::chain(dim),
    }
}

/// Spin-l ladder with `H = omega J_z`, `L = J_-`. `twice_l = 2l`.
pub fn build_spin_model(twice_l: u32, omega: f64) -> Result<ModelSpec, ModelError> {
    if twice_l == 0 {
        return Err(invalid("l", "spin must be positive"));
    }
    if !omega.is_finite() {
        return Err(invalid("omega", "non-finite"));
    }
    let l = twice_l as f64 / 2.0;
    let dim = twice_l as usize + 1;
    // Level m (one-based) has J_z eigenvalue -l - 1 + m.
    let c: Vec<f64> = (1..=dim).map(|m| omega * (-l - 1.0 + m as f64)).collect();
    let g: Vec<C64> = (2..=dim)
        .map(|n| {
            let m = -l - 1.0 + n as f64;
            C64::new((l * (l + 1.0) - m * (m - 1.0)).sqrt(), 0.0)
        })
        .collect();
    Ok(chain_model(
        ModelFamily::SpinL,
        ModelParams::SpinL { twice_l, omega },
        &c,
        &g,
    ))
}

/// `H = sum C_m |m><m|`, `L = sum_{n>=2} G_n |n-1><n|`; `g[0]` is `G_2`.
pub fn build_spin_general(c: &[f64], g: &[C64]) -> Result<ModelSpec, ModelError> {
    if c.len() < 2 {
        return Err(invalid("C", "need at least two levels"));
    }
    if g.len() + 1 != c.len() {
        return Err(invalid(
            "G",
            format!(
                "expected {} couplings for {} levels, got {}",
                c.len() - 1,
                c.len(),
                g.len()
            ),
        ));
    }
    check_finite("C", real(c))?;
    check_finite("G", g.iter().copied())?;
    Ok(chain_model(
        ModelFamily::SpinGeneral,
        ModelParams::SpinGeneral {
            c: c.to_vec(),
            g: g.to_vec(),
        },
        c,
        g,
    ))
}

/// `H = sum omega_j |j><j|`, `L = kappa_1 |1><2| + kappa_2 |2><3|`.
pub fn build_three_level(omegas: [f64; 3], kappas: [C64; 2]) -> Result<ModelSpec, ModelError> {
    check_finite("omegas", real(&omegas))?;
    check_finite("kappas", kappas)?;
    Ok(chain_model(
        ModelFamily::ThreeLevelGeneral,
        ModelParams::ThreeLevelGeneral { omegas, kappas },
        &omegas,
        &kappas,
    ))
}

fn noise_free_model(
    family: ModelFamily,
    params: ModelParams,
    omegas: &[f64],
    lindblad: CMatrix,
    drives: Vec<DriveTerm>,
    channels: Vec<(usize, usize)>,
) -> Result<ModelSpec, ModelError> {
    let dim = omegas.len();
    for d in &drives {
        if d.bra > dim || d.ket > dim {
            return Err(invalid(
                "drive",
                format!("level out of range 1..={dim}: ({}, {})", d.bra, d.ket),
            ));
        }
    }
    check_noise_free_conditions(&lindblad, &drives)?;
    for d in &drives {
        let (a, b) = (d.bra - 1, d.ket - 1);
        if channels.contains(&(a, b)) || channels.contains(&(b, a)) {
            return Err(ModelError::DriveOnChannel { bra: d.bra, ket: d.ket });
        }
    }
    Ok(ModelSpec {
        dim,
        family,
        params,
        static_h: CMatrix::from_real_diagonal(omegas),
        drives,
        lindblad,
        noise_order_exact: 0,
        layout: BasisLayout::noise_free(dim, channels),
    })
}

/// Four-level atom decaying into level 1, with drives between upper levels.
pub fn build_driven_four_level(
    omegas: [f64; 4],
    kappas: [C64; 3],
    drives: &[DriveTerm],
) -> Result<ModelSpec, ModelError> {
    check_finite("omegas", real(&omegas))?;
    check_finite("kappas", kappas)?;
    for d in drives {
        if d.bra == 1 || d.ket == 1 {
            return Err(ModelError::DriveOnChannel { bra: d.bra, ket: d.ket });
        }
    }
    let mut l = CMatrix::zeros(4, 4);
    for (j, &k) in kappas.iter().enumerate() {
        l[(0, j + 1)] = k;
    }
    noise_free_model(
        ModelFamily::DrivenFourLevel,
        ModelParams::DrivenFourLevel {
            omegas,
            kappas,
            drives: drives.to_vec(),
        },
        &omegas,
        l,
        drives.to_vec(),
        (1..4).map(|j| (0, j)).collect(),
    )
}

/// `L = sum_{j<N} kappa_j |j><N|`.
pub fn build_multi_transition(omegas: &[f64], kappas: &[C64]) -> Result<ModelSpec, ModelError> {
    let n = omegas.len();
    if n < 2 {
        return Err(invalid("omegas", "need at least two levels"));
    }
    if kappas.len() + 1 != n {
        return Err(invalid(
            "kappas",
            format!("expected {} couplings, got {}", n - 1, kappas.len()),
        ));
    }
    check_finite("omegas", real(omegas))?;
    check_finite("kappas", kappas.iter().copied())?;
    let mut l = CMatrix::zeros(n, n);
    for (j, &k) in kappas.iter().enumerate() {
        l[(j, n - 1)] = k;
    }
    noise_free_model(
        ModelFamily::MultiTransition,
        ModelParams::MultiTransition {
            omegas: omegas.to_vec(),
            kappas: kappas.to_vec(),
        },
        omegas,
        l,
        Vec::new(),
        (0..n - 1).map(|j| (j, n - 1)).collect(),
    )
}

/// Levels `1..=lower` form the lower band; `kappas[j][k]` couples lower
/// level `j + 1` to upper level `lower + k + 1`.
pub fn build_band_model(omegas: &[f64], lower: usize, kappas: &[Vec<C64>]) -> Result<ModelSpec, ModelError> {
    let dim = omegas.len();
    if lower == 0 || lower >= dim {
        return Err(invalid(
            "lower",
            format!("lower band size must be in 1..{dim}, got {lower}"),
        ));
    }
    let upper = dim - lower;
    if kappas.len() != lower || kappas.iter().any(|row| row.len() != upper) {
        return Err(invalid(
            "kappas",
            format!("expected a {lower}x{upper} coupling matrix (lower x upper band)"),
        ));
    }
    check_finite("omegas", real(omegas))?;
    check_finite("kappas", kappas.iter().flatten().copied())?;
    let mut l = CMatrix::zeros(dim, dim);
    let mut channels = Vec::with_capacity(lower * upper);
    for (j, row) in kappas.iter().enumerate() {
        for (k, &kap) in row.iter().enumerate() {
            l[(j, lower + k)] = kap;
            channels.push((j, lower + k));
        }
    }
    noise_free_model(
        ModelFamily::BandModel,
        ModelParams::BandModel {
            omegas: omegas.to_vec(),
            lower,
            kappas: kappas.to_vec(),
        },
        omegas,
        l,
        Vec::new(),
        channels,
    )
}

/// The two structural conditions under which a noise-free O-operator exists:
/// no drive term `|a><b|` (or its conjugate) appears in `L`, and `L` has no
/// transition triangle `|n1><n2|, |n2><n3|, |n1><n3|`.
pub fn check_noise_free_conditions(l: &CMatrix, drives: &[DriveTerm]) -> Result<(), ModelError> {
    let n = l.rows();
    let on = |a: usize, b: usize| a != b && l[(a, b)] != ZERO;
    for d in drives {
        let (a, b) = (d.bra - 1, d.ket - 1);
        if on(a, b) || on(b, a) {
            return Err(ModelError::DriveOnChannel { bra: d.bra, ket: d.ket });
        }
    }
    for n1 in 0..n {
        for n2 in 0..n {
            if !on(n1, n2) {
                continue;
            }
            for n3 in 0..n {
                if n3 != n1 && on(n2, n3) && on(n1, n3) {
                    return Err(ModelError::TransitionCycle((n1 + 1, n2 + 1, n3 + 1)));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::commutator;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).norm_max() <= tol
    }

    #[test]
    fn spin_half_convention() {
        let m = build_spin_model(1, 1.0).unwrap();
        assert_eq!(m.lindblad(), &CMatrix::unit(2, 0, 1));
        assert_eq!(m.hamiltonian(0.0), CMatrix::from_real_diagonal(&[-0.5, 0.5]));
        assert_eq!(m.noise_order_exact(), 0);
        assert_eq!(m.layout().total(), 1);
    }

    #[test]
    fn spin_three_half_ladder() {
        let m = build_spin_model(3, 1.0).unwrap();
        let l = m.lindblad();
        let expect = [3f64.sqrt(), 2.0, 3f64.sqrt()];
        for (n, &g) in expect.iter().enumerate() {
            assert!((l[(n, n + 1)].re - g).abs() < 1e-15);
        }
        assert_eq!(m.noise_order_exact(), 2);
        assert_eq!(m.layout().counts(), vec![3, 2, 1]);
        // [J_z, J_-] = -J_-
        let jz = m.hamiltonian(0.0);
        assert!(close(&commutator(&jz, l).unwrap(), &l.scale_real(-1.0), 1e-14));
    }

    #[test]
    fn spin_one_ladder() {
        let m = build_spin_model(2, 1.0).unwrap();
        let s = 2f64.sqrt();
        assert!((m.lindblad()[(0, 1)].re - s).abs() < 1e-15);
        assert!((m.lindblad()[(1, 2)].re - s).abs() < 1e-15);
    }

    #[test]
    fn general_chain_matches_spin() {
        let s3 = 3f64.sqrt();
        let g = [s3, 2.0, s3].map(|x| C64::new(x, 0.0));
        let a = build_spin_general(&[-1.5, -0.5, 0.5, 1.5], &g).unwrap();
        let b = build_spin_model(3, 1.0).unwrap();
        assert!(close(a.lindblad(), b.lindblad(), 1e-15));
        assert!(close(&a.hamiltonian(0.3), &b.hamiltonian(0.3), 1e-15));
        assert!(build_spin_general(&[0.0, 1.0], &[]).is_err());
        let free = build_spin_general(&[0.0, 1.0, 2.0], &[ZERO, ZERO]).unwrap();
        assert_eq!(free.lindblad().norm_max(), 0.0);
    }

    #[test]
    fn table_one_counts() {
        for twice_l in 1..=7u32 {
            let m = build_spin_model(twice_l, 1.0).unwrap();
            let layout = enumerate_basis(&m);
            let l2 = twice_l as usize;
            assert_eq!(layout.total(), l2 * (l2 + 1) / 2);
            for k in 0..l2 {
                assert_eq!(layout.count(k), l2 - k);
            }
            assert_eq!(layout.count(l2), 0);
        }
    }

    #[test]
    fn ladder_closure_raises_order() {
        // [L, O_j^(k)] lies in the order-(k+1) span.
        let m = build_spin_model(5, 1.0).unwrap();
        let layout = m.layout();
        for k in 0..layout.max_order() {
            for j in 0..layout.count(k) {
                let c = commutator(m.lindblad(), &layout.operator(k, j)).unwrap();
                let (_, leak) = layout.project(k + 1, &c);
                assert_eq!(leak, 0.0);
            }
        }
    }

    #[test]
    fn drives_and_hermiticity() {
        let d = DriveTerm::new(2, 3, C64::new(0.1, 0.0), 2.0).unwrap();
        let d4 = DriveTerm::new(3, 4, C64::new(0.1, 0.0), 2.0).unwrap();
        let k = [0.4, 0.8, 0.3].map(|x| C64::new(x, 0.0));
        let m = build_driven_four_level([0.1, 0.3, 0.6, 0.2], k, &[d, d4]).unwrap();
        for i in 0..100 {
            let t = 0.37 * i as f64;
            assert!(m.hamiltonian(t).hermiticity_residual() < 1e-12);
        }
        let h = m.hamiltonian(0.5);
        assert!((h[(1, 2)] - C64::from_polar(0.1, 1.0)).norm() < 1e-15);
        let bad = DriveTerm::new(1, 2, C64::new(0.1, 0.0), 0.0).unwrap();
        assert!(matches!(
            build_driven_four_level([0.0; 4], k, &[bad]),
            Err(ModelError::DriveOnChannel { .. })
        ));
        assert!(DriveTerm::new(2, 2, ZERO, 0.0).is_err());
    }

    #[test]
    fn noise_free_layouts() {
        let k = [0.4, 0.8, 0.3].map(|x| C64::new(x, 0.0));
        let m = build_multi_transition(&[0.1, 0.3, 0.6, 0.2], &k).unwrap();
        assert_eq!(m.layout().entries(0), &[(0, 3), (1, 3), (2, 3)]);
        assert_eq!(m.noise_order_exact(), 0);
        assert!(build_multi_transition(&[0.0], &[]).is_err());
        let one = C64::new(1.0, 0.0);
        let band = build_band_model(&[0.0, 0.1, 1.0, 1.2], 2, &[vec![one, ZERO], vec![ZERO, one]]).unwrap();
        assert_eq!(band.layout().count(0), 4);
        assert!(build_band_model(&[0.0, 1.0], 2, &[]).is_err());
    }

    #[test]
    fn cycle_detection() {
        let mut l = CMatrix::zeros(3, 3);
        l[(0, 1)] = C64::new(1.0, 0.0);
        l[(1, 2)] = C64::new(1.0, 0.0);
        assert!(check_noise_free_conditions(&l, &[]).is_ok());
        l[(0, 2)] = C64::new(1.0, 0.0);
        assert!(matches!(
            check_noise_free_conditions(&l, &[]),
            Err(ModelError::TransitionCycle(_))
        ));
    }

    #[test]
    fn family_names_round_trip() {
        for f in ModelFamily::ALL {
            assert_eq!(ModelFamily::from_name(f.name()).unwrap(), f);
        }
        assert_eq!(
            ModelFamily::from_name("spin_3half_general").unwrap(),
            ModelFamily::SpinGeneral
        );
        assert!(ModelFamily::from_name("spin").is_err());
    }
}
