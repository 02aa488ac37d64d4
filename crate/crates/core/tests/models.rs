use nmqsd::linalg::{CMatrix, C64};
use nmqsd::models::{
    build_band_model, build_driven_four_level, build_multi_transition, build_spin_general, build_spin_model,
    build_three_level, check_noise_free_conditions, enumerate_basis, DriveTerm, ModelError, ModelFamily,
};
use proptest::prelude::*;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Operators per noise order for 2l = 1..7 and the total l(2l+1).
const TABLE_ONE: [(u32, &[usize], usize); 7] = [
    (1, &[1], 1),
    (2, &[2, 1], 3),
    (3, &[3, 2, 1], 6),
    (4, &[4, 3, 2, 1], 10),
    (5, &[5, 4, 3, 2, 1], 15),
    (6, &[6, 5, 4, 3, 2, 1], 21),
    (7, &[7, 6, 5, 4, 3, 2, 1], 28),
];

#[test]
fn basis_counts_per_order() {
    for (twice_l, counts, total) in TABLE_ONE {
        let layout = enumerate_basis(&build_spin_model(twice_l, 1.0).unwrap());
        assert_eq!(layout.counts(), counts.to_vec(), "2l = {twice_l}");
        assert_eq!(layout.total(), total);
        assert_eq!(layout.max_order() + 1, twice_l as usize);
    }
}

#[test]
fn spin_three_halves_matrices() {
    let m = build_spin_model(3, 1.0).unwrap();
    assert_eq!(m.hamiltonian(0.0), CMatrix::from_real_diagonal(&[-1.5, -0.5, 0.5, 1.5]));
    let l = m.lindblad();
    let g = [3f64.sqrt(), 2.0, 3f64.sqrt()];
    for r in 0..4 {
        for col in 0..4 {
            let want = if col == r + 1 { g[r] } else { 0.0 };
            assert!((l[(r, col)] - c(want)).norm() < 1e-15);
        }
    }
    let general = build_spin_general(&[-1.5, -0.5, 0.5, 1.5], &g.map(c)).unwrap();
    assert_eq!(general.lindblad(), m.lindblad());
    assert_eq!(general.family(), ModelFamily::SpinGeneral);
    assert_eq!(m.noise_order_exact(), 2);
}

#[test]
fn three_level_with_spin_one_couplings_is_spin_one() {
    let s2 = 2f64.sqrt();
    let a = build_three_level([-1.0, 0.0, 1.0], [c(s2), c(s2)]).unwrap();
    let b = build_spin_model(2, 1.0).unwrap();
    assert_eq!(a.lindblad(), b.lindblad());
    assert_eq!(a.hamiltonian(0.3), b.hamiltonian(0.3));
    assert_eq!(a.layout(), b.layout());
}

#[test]
fn noise_free_families() {
    let drives = [
        DriveTerm::new(2, 3, c(0.1), 2.0).unwrap(),
        DriveTerm::new(3, 4, c(0.1), 2.0).unwrap(),
    ];
    let four = build_driven_four_level([0.1, 0.3, 0.6, 0.2], [c(0.4), c(0.8), c(0.3)], &drives).unwrap();
    assert_eq!(four.noise_order_exact(), 0);
    assert!(four.is_time_dependent());
    let h = four.hamiltonian(0.7);
    assert!(h.hermiticity_residual() < 1e-15);
    assert!((h[(1, 2)] - C64::new(0.0, 1.4).exp() * 0.1).norm() < 1e-15);

    let multi = build_multi_transition(&[0.0, 0.5, 1.0, 2.0], &[c(0.3), c(0.5), c(0.7)]).unwrap();
    assert_eq!(multi.layout().counts(), vec![3]);
    let band = build_band_model(&[0.0, 0.1, 1.0, 1.2], 2, &[vec![c(0.3), c(0.4)], vec![c(0.5), c(0.6)]]).unwrap();
    assert_eq!(band.layout().counts(), vec![4]);
    assert!(check_noise_free_conditions(band.lindblad(), &[]).is_ok());
}

#[test]
fn structural_failures_are_named() {
    let mut cycle = CMatrix::zeros(3, 3);
    cycle[(0, 1)] = c(1.0);
    cycle[(1, 2)] = c(1.0);
    cycle[(0, 2)] = c(1.0);
    assert!(matches!(
        check_noise_free_conditions(&cycle, &[]),
        Err(ModelError::TransitionCycle(_))
    ));
    let bad = DriveTerm::new(1, 3, c(0.1), 1.0).unwrap();
    assert!(matches!(
        build_driven_four_level([0.0; 4], [c(1.0); 3], &[bad]),
        Err(ModelError::DriveOnChannel { .. })
    ));
    assert!(matches!(
        ModelFamily::from_name("spin_7half"),
        Err(ModelError::UnknownFamily(_))
    ));
    assert!(build_spin_model(0, 1.0).is_err());
    assert!(build_multi_transition(&[0.0, 1.0], &[c(1.0), c(2.0)]).is_err());
}

proptest! {
    #[test]
    fn spin_ladder_algebra(twice_l in 1u32..8, omega in 0.1f64..5.0) {
        let m = build_spin_model(twice_l, omega).unwrap();
        let l = m.lindblad();
        let ld = l.adjoint();
        let h = m.hamiltonian(0.0);
        // [J_+, J_-] = 2 J_z and [J_z, J_-] = -J_-.
        let jz = h.scale_real(1.0 / omega);
        let comm = &ld.mul_unchecked(l) - &l.mul_unchecked(&ld);
        prop_assert!((&comm - &jz.scale_real(2.0)).norm_max() < 1e-12);
        let c2 = &jz.mul_unchecked(l) - &l.mul_unchecked(&jz);
        prop_assert!((&c2 + l).norm_max() < 1e-12);
        prop_assert_eq!(l.pow(twice_l + 1).norm_max(), 0.0);
        prop_assert!(l.pow(twice_l).norm_max() > 0.0);
    }

    #[test]
    fn layout_operators_are_matrix_units(twice_l in 1u32..8) {
        let m = build_spin_model(twice_l, 1.0).unwrap();
        let layout = m.layout();
        for k in 0..=layout.max_order() {
            for (j, &(r, col)) in layout.entries(k).iter().enumerate() {
                prop_assert_eq!(col, r + k + 1);
                prop_assert_eq!(layout.operator(k, j), CMatrix::unit(m.dim(), r, col));
            }
        }
    }
}
