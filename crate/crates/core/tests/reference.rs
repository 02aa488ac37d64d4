use nmqsd::coefficients::integrate_coefficients;
use nmqsd::linalg::{CMatrix, DensityMatrix, StateVector, C64};
use nmqsd::models::{build_driven_four_level, build_spin_model, DriveTerm, ModelSpec};
use nmqsd::noise::{CorrelationKernel, TabulatedKernel, TimeGrid};
use nmqsd::reference::{solve_convolutionless, solve_lindblad, solve_pseudomode, Method, ReferenceError};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn uniform(dim: usize) -> DensityMatrix {
    DensityMatrix::pure(&StateVector::new(vec![c(1.0 / (dim as f64).sqrt()); dim]).unwrap())
}

fn four_level() -> ModelSpec {
    let drives = [
        DriveTerm::new(2, 3, c(0.1), 2.0).unwrap(),
        DriveTerm::new(3, 4, c(0.1), 2.0).unwrap(),
    ];
    build_driven_four_level([0.1, 0.3, 0.6, 0.2], [c(0.4), c(0.8), c(0.3)], &drives).unwrap()
}

fn max_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    (a.matrix() - b.matrix()).norm_max()
}

#[test]
fn lindblad_amplitude_damping() {
    let (gamma_rate, omega) = (0.7, 1.3);
    let model = build_spin_model(1, omega).unwrap();
    let grid = TimeGrid::new(5.0, 500).unwrap();
    let run = solve_lindblad(&model, gamma_rate, &uniform(2), grid).unwrap();
    assert_eq!(run.method, Method::Lindblad);
    for (n, rho) in run.rho.iter().enumerate() {
        let t = grid.time(n);
        assert!((rho.entry(1, 1).re - 0.5 * (-gamma_rate * t).exp()).abs() < 1e-9);
        let eg = c(0.5) * C64::new(-gamma_rate / 2.0, -omega).scale(t).exp();
        assert!((rho.entry(1, 0) - eg).norm() < 1e-9);
        assert!(rho.hermiticity_residual() < 1e-10);
    }
    assert!(run.max_trace_drift < 1e-8);
}

#[test]
fn lindblad_trivial_limits() {
    let model = build_spin_model(3, 1.0).unwrap();
    let grid = TimeGrid::new(3.0, 300).unwrap();
    let rho0 = DensityMatrix::from_matrix(
        &CMatrix::from_real_diagonal(&[0.1, 0.2, 0.3, 0.4])
            + &{
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 3)] = c(0.1);
                m[(3, 0)] = c(0.1);
                m
            },
    )
    .unwrap();
    let e0 = rho0.eigvals().unwrap();
    let unitary = solve_lindblad(&model, 0.0, &rho0, grid).unwrap();
    for rho in &unitary.rho {
        for (a, b) in rho.eigvals().unwrap().iter().zip(&e0) {
            assert!((a - b).abs() < 1e-8);
        }
    }
    let ground = DensityMatrix::pure(&StateVector::basis(4, 0));
    let still = solve_lindblad(&model, 1.0, &ground, grid).unwrap();
    assert!(still.rho.iter().all(|r| max_diff(r, &ground) < 1e-14));
}

#[test]
fn convolutionless_approaches_lindblad_in_markov_limit() {
    let model = build_spin_model(1, 1.0).unwrap();
    let grid = TimeGrid::new(3.0, 6000).unwrap();
    let kernel = CorrelationKernel::exponential(1.0, 200.0).unwrap();
    let table = integrate_coefficients(&model, &kernel, grid, 0).unwrap();
    let cl = solve_convolutionless(&model, &table, &uniform(2)).unwrap();
    let lb = solve_lindblad(&model, 1.0, &uniform(2), grid).unwrap();
    for n in (200..grid.len()).step_by(100) {
        assert!(max_diff(&cl.rho[n], &lb.rho[n]) < 0.01, "t = {}", grid.time(n));
    }
}

#[test]
fn convolutionless_starts_unitary() {
    let model = build_spin_model(1, 1.0).unwrap();
    let grid = TimeGrid::new(0.1, 100).unwrap();
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let table = integrate_coefficients(&model, &kernel, grid, 0).unwrap();
    assert_eq!(table.obar0_matrix(0).norm_max(), 0.0);
    let rho0 = uniform(2);
    let run = solve_convolutionless(&model, &table, &rho0).unwrap();
    let h = model.hamiltonian(0.0);
    let slope = (&h.mul_unchecked(rho0.matrix()) - &rho0.matrix().mul_unchecked(&h)).scale(C64::new(0.0, -1.0));
    let dt = grid.dt();
    let fd = (run.rho[1].matrix() - rho0.matrix()).scale_real(1.0 / dt);
    // The dissipator grows like t, so the finite difference differs by O(dt).
    assert!((&fd - &slope).norm_max() < 2.0 * dt);
}

#[test]
fn convolutionless_rejects_noisy_models() {
    let model = build_spin_model(3, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let table = integrate_coefficients(&model, &kernel, grid, 0).unwrap();
    let err = solve_convolutionless(&model, &table, &uniform(4)).unwrap_err();
    assert_eq!(err, ReferenceError::NotNoiseFree { order: 2 });
    assert!(err.to_string().contains("ensemble"));
}

#[test]
fn pseudomode_matches_convolutionless_for_spin_half() {
    let model = build_spin_model(1, 1.0).unwrap();
    let grid = TimeGrid::new(6.0, 1200).unwrap();
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let table = integrate_coefficients(&model, &kernel, grid, 0).unwrap();
    let rho0 = DensityMatrix::pure(&StateVector::new(vec![c(0.6), C64::new(0.0, 0.8)]).unwrap());
    let cl = solve_convolutionless(&model, &table, &rho0).unwrap();
    let pm = solve_pseudomode(&model, &kernel, 8, &rho0, grid).unwrap();
    assert!(pm.cutoff_difference.unwrap() < 1e-6);
    for (a, b) in cl.rho.iter().zip(&pm.rho) {
        assert!(max_diff(a, b) < 1e-4);
    }
}

#[test]
fn pseudomode_matches_convolutionless_for_driven_four_level() {
    let model = four_level();
    let grid = TimeGrid::new(5.0, 1000).unwrap();
    let rho0 = DensityMatrix::pure(&StateVector::basis(4, 2));
    for gamma in [0.3, 3.0] {
        let kernel = CorrelationKernel::exponential(1.0, gamma).unwrap();
        let table = integrate_coefficients(&model, &kernel, grid, 0).unwrap();
        let cl = solve_convolutionless(&model, &table, &rho0).unwrap();
        let pm = solve_pseudomode(&model, &kernel, 6, &rho0, grid).unwrap();
        let worst = cl
            .rho
            .iter()
            .zip(&pm.rho)
            .map(|(a, b)| max_diff(a, b))
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "gamma {gamma}: {worst}");
        assert!(cl.min_eigenvalue >= -1e-8);
    }
}

#[test]
fn pseudomode_without_coupling_is_unitary() {
    let model = build_spin_model(3, 1.0).unwrap();
    let grid = TimeGrid::new(2.0, 200).unwrap();
    let kernel = CorrelationKernel::exponential(0.0, 0.5).unwrap();
    let pm = solve_pseudomode(&model, &kernel, 2, &uniform(4), grid).unwrap();
    let lb = solve_lindblad(&model, 0.0, &uniform(4), grid).unwrap();
    for (a, b) in pm.rho.iter().zip(&lb.rho) {
        assert!(max_diff(a, b) < 1e-12);
    }
    assert_eq!(pm.cutoff_difference, Some(0.0));
}

#[test]
fn pseudomode_errors() {
    // Spin-3/2 can push three quanta into the mode; two levels are not enough.
    let model = build_spin_model(3, 1.0).unwrap();
    let grid = TimeGrid::new(2.0, 200).unwrap();
    let kernel = CorrelationKernel::exponential(4.0, 0.5).unwrap();
    let rho0 = uniform(4);
    assert_eq!(
        solve_pseudomode(&model, &kernel, 1, &rho0, grid).unwrap_err(),
        ReferenceError::InvalidCutoff(1)
    );
    assert!(matches!(
        solve_pseudomode(&model, &kernel, 2, &rho0, grid),
        Err(ReferenceError::CutoffNotConverged { suggested: 6, .. })
    ));
    let tab = CorrelationKernel::tabulated(TabulatedKernel::from_fn(0.01, 300, |_| c(0.1)).unwrap());
    assert_eq!(
        solve_pseudomode(&model, &tab, 4, &rho0, grid).unwrap_err(),
        ReferenceError::NotExponential
    );
}

#[test]
fn invalid_initial_states() {
    let model = build_spin_model(1, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let bad_trace = DensityMatrix::from_matrix(CMatrix::from_real_diagonal(&[0.5, 0.6])).unwrap();
    assert!(matches!(
        solve_lindblad(&model, 1.0, &bad_trace, grid),
        Err(ReferenceError::InvalidInitialState(_))
    ));
    let negative = DensityMatrix::from_matrix(CMatrix::from_real_diagonal(&[1.2, -0.2])).unwrap();
    assert!(matches!(
        solve_lindblad(&model, 1.0, &negative, grid),
        Err(ReferenceError::InvalidInitialState(_))
    ));
    assert!(matches!(
        solve_lindblad(&model, 1.0, &uniform(3), grid),
        Err(ReferenceError::DimensionMismatch { .. })
    ));
}

#[test]
fn coarse_grid_reports_trace_drift() {
    let model = build_spin_model(1, 1.0).unwrap();
    let grid = TimeGrid::new(10.0, 4).unwrap();
    let err = solve_lindblad(&model, 5.0, &uniform(2), grid).unwrap_err();
    assert!(matches!(
        err,
        ReferenceError::TraceDrift { .. } | ReferenceError::Unphysical { .. } | ReferenceError::NonFinite(_)
    ));
    assert!(err.to_string().contains("dt") || matches!(err, ReferenceError::NonFinite(_)));
}
