use nmqsd::coefficients::{integrate_coefficients, integrate_coefficients_with, CoefficientOptions, CoefficientTable};
use nmqsd::linalg::{StateVector, C64};
use nmqsd::models::{build_spin_model, ModelSpec};
use nmqsd::noise::{CorrelationKernel, NoiseRealization, NoiseShift, TabulatedKernel, TimeGrid};
use nmqsd::propagator::{run_trajectory, step_linear, step_nonlinear, Mode, PropagationError, Propagator};

fn setup(twice_l: u32, gamma_rate: f64, gamma: f64, grid: TimeGrid, order: usize) -> (ModelSpec, CoefficientTable) {
    let model = build_spin_model(twice_l, 1.0).unwrap();
    let kernel = CorrelationKernel::exponential(gamma_rate, gamma).unwrap();
    let table = integrate_coefficients(&model, &kernel, grid, order).unwrap();
    (model, table)
}

fn uniform(dim: usize) -> StateVector {
    StateVector::new(vec![C64::new(1.0 / (dim as f64).sqrt(), 0.0); dim]).unwrap()
}

#[test]
fn unitary_limit_conserves_energy_and_modes_agree() {
    let grid = TimeGrid::new(10.0, 10_000).unwrap();
    let (model, table) = setup(1, 0.0, 0.5, grid, 0);
    let psi0 = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    let h = model.hamiltonian(0.0);
    let e0 = psi0.expectation(&h).re;
    let lin = Propagator::new(&model, &table, Mode::Linear)
        .unwrap()
        .run(&psi0, 1, 0)
        .unwrap();
    let non = Propagator::new(&model, &table, Mode::Nonlinear)
        .unwrap()
        .run(&psi0, 1, 0)
        .unwrap();
    for (n, (a, b)) in lin.states.iter().zip(&non.states).enumerate() {
        assert!((a.expectation(&h).re - e0).abs() < 1e-8, "energy drift at {n}");
        let diff = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "modes differ by {diff} at {n}");
    }
    // Exact phases e^{-i C_m t}.
    let t = grid.t_max();
    let last = lin.states.last().unwrap().amplitudes();
    for (m, c) in [-0.5, 0.5].iter().enumerate() {
        let exact = psi0.amplitudes()[m] * C64::new(0.0, -c * t).exp();
        assert!((last[m] - exact).norm() < 1e-5);
    }
}

#[test]
fn ground_state_is_dark() {
    let grid = TimeGrid::new(5.0, 500).unwrap();
    let (model, table) = setup(3, 1.0, 0.5, grid, 1);
    let g = StateVector::basis(4, 0);
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let run = run_trajectory(&model, &table, &g, mode, 3, 7).unwrap();
        for (s, nrm) in run.states.iter().zip(&run.norms) {
            assert!(s.amplitudes()[1..].iter().all(|z| z.norm() == 0.0));
            // Heun's phase error leaves a tiny norm drift in linear mode.
            assert!((nrm - 1.0).abs() < 1e-5);
            assert!((s.inner(&g).norm() / s.norm() - 1.0).abs() < 1e-12);
        }
    }
}

/// With zero noise the excited amplitude obeys `u' = -i w/2 u - F u`,
/// integrated here jointly with `F' = c - gamma F + i w F + F^2`.
#[test]
fn zero_noise_two_level_norm() {
    let (gamma_rate, gamma, omega) = (1.0, 0.5, 1.0);
    let grid = TimeGrid::new(5.0, 5000).unwrap();
    let (model, table) = setup(1, gamma_rate, gamma, grid, 0);
    let psi0 = StateVector::basis(2, 1);
    let prop = Propagator::new(&model, &table, Mode::Linear).unwrap();
    let run = prop.run_with_noise(&psi0, &NoiseRealization::zeros(grid)).unwrap();

    let cc = gamma_rate * gamma / 2.0;
    let rhs = |y: [C64; 2]| {
        let [f, u] = y;
        [
            C64::new(cc, 0.0) - f * gamma + C64::new(0.0, omega) * f + f * f,
            C64::new(0.0, -omega / 2.0) * u - f * u,
        ]
    };
    let add = |y: [C64; 2], k: [C64; 2], h: f64| [y[0] + k[0] * h, y[1] + k[1] * h];
    let mut y = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let sub = 10;
    let h = grid.dt() / sub as f64;
    for n in 0..grid.n_steps() {
        for _ in 0..sub {
            let k1 = rhs(y);
            let k2 = rhs(add(y, k1, h / 2.0));
            let k3 = rhs(add(y, k2, h / 2.0));
            let k4 = rhs(add(y, k3, h));
            y = [0, 1].map(|i| y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0));
        }
        let got = run.norms[n + 1].powi(2);
        assert!(
            (got - y[1].norm_sqr()).abs() < 1e-6,
            "t = {}: {got} vs {}",
            grid.time(n + 1),
            y[1].norm_sqr()
        );
    }
}

#[test]
fn same_stream_is_bit_identical() {
    let grid = TimeGrid::new(3.0, 300).unwrap();
    let (model, table) = setup(3, 1.0, 0.3, grid, 2);
    let psi0 = uniform(4);
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let a = run_trajectory(&model, &table, &psi0, mode, 42, 5).unwrap();
        let b = run_trajectory(&model, &table, &psi0, mode, 42, 5).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&model, &table, &psi0, mode, 42, 6).unwrap();
        assert_ne!(a.states, c.states);
    }
}

#[test]
fn first_order_spin_three_halves_runs_without_collapse() {
    let grid = TimeGrid::new(10.0, 1000).unwrap();
    let (model, table) = setup(3, 1.0, 0.3, grid, 1);
    let psi0 = uniform(4);
    let prop = Propagator::new(&model, &table, Mode::Nonlinear).unwrap();
    for stream in 0..20 {
        let run = prop.run(&psi0, 11, stream).unwrap();
        assert_eq!(run.states.len(), grid.len());
        for s in &run.states {
            assert!((s.norm() - 1.0).abs() < 1e-10);
            assert!(s.is_finite());
        }
    }
}

#[test]
fn frozen_noise_refinement_converges() {
    let fine_grid = TimeGrid::new(2.0, 8000).unwrap();
    let coarse_grid = fine_grid.coarsen(2).unwrap();
    let model = build_spin_model(1, 1.0).unwrap();
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let fine_table = integrate_coefficients(&model, &kernel, fine_grid, 0).unwrap();
    let coarse_table = integrate_coefficients(&model, &kernel, coarse_grid, 0).unwrap();
    let psi0 = uniform(2);
    let excited = |s: &StateVector| s.amplitudes()[1].norm_sqr() / s.norm_sqr();
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let fine = Propagator::new(&model, &fine_table, mode).unwrap();
        let coarse = Propagator::new(&model, &coarse_table, mode).unwrap();
        for stream in 0..5 {
            let noise = fine.sample_noise(9, stream);
            let sub: Vec<C64> = noise.values().iter().step_by(2).copied().collect();
            let noise_c = NoiseRealization::from_values(coarse_grid, sub).unwrap();
            let a = fine.run_with_noise(&psi0, &noise).unwrap();
            let b = coarse.run_with_noise(&psi0, &noise_c).unwrap();
            for n in 0..coarse_grid.len() {
                let d = (excited(&a.states[2 * n]) - excited(&b.states[n])).abs();
                assert!(d < 1e-4, "{mode:?} stream {stream} t = {}: {d}", coarse_grid.time(n));
            }
        }
    }
}

#[test]
fn tabulated_kernel_follows_closure_route() {
    let grid = TimeGrid::new(2.0, 200).unwrap();
    let model = build_spin_model(2, 1.0).unwrap();
    let (gamma_rate, gamma) = (1.0, 1.0);
    let exp = CorrelationKernel::exponential(gamma_rate, gamma).unwrap();
    let tab = CorrelationKernel::tabulated(
        TabulatedKernel::from_fn(grid.dt(), 201, |tau| {
            C64::new(gamma_rate * gamma / 2.0 * (-gamma * tau).exp(), 0.0)
        })
        .unwrap(),
    );
    let opts = CoefficientOptions {
        probe_tolerance: None,
        ..Default::default()
    };
    let a_table = integrate_coefficients(&model, &exp, grid, 1).unwrap();
    let b_table = integrate_coefficients_with(&model, &tab, grid, 1, &opts).unwrap();
    let psi0 = uniform(3);
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let a = Propagator::new(&model, &a_table, mode).unwrap();
        let b = Propagator::new(&model, &b_table, mode).unwrap();
        let noise = a.sample_noise(4, 0);
        let ra = a.run_with_noise(&psi0, &noise).unwrap();
        let rb = b.run_with_noise(&psi0, &noise).unwrap();
        for (x, y) in ra.states.iter().zip(&rb.states) {
            let d = x
                .amplitudes()
                .iter()
                .zip(y.amplitudes())
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-3, "{mode:?}: {d}");
        }
    }
}

#[test]
fn single_steps_match_propagator() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let (model, table) = setup(1, 1.0, 0.5, grid, 0);
    let psi0 = uniform(2);
    let prop = Propagator::new(&model, &table, Mode::Linear).unwrap();
    let noise = NoiseRealization::zeros(grid);
    let run = prop.run_with_noise(&psi0, &noise).unwrap();
    let (o0, o1) = (table.obar0_matrix(0), table.obar0_matrix(1));
    let zero = C64::new(0.0, 0.0);
    let s = step_linear(&psi0, &model, (&o0, &o1), (zero, zero), 0.0, grid.dt()).unwrap();
    assert_eq!(&s, &run.states[1]);
    let nonlinear = Propagator::new(&model, &table, Mode::Nonlinear).unwrap();
    let run = nonlinear.run_with_noise(&psi0, &noise).unwrap();
    // The end-of-step stage sees the predicted shift built from <L^dag> at t = 0.
    let mut shift = NoiseShift::new(table.kernel(), &grid);
    let z_end = shift.predict(psi0.expectation(&model.lindblad().adjoint()));
    let s = step_nonlinear(&psi0, &model, (&o0, &o1), (zero, z_end), 0.0, grid.dt()).unwrap();
    assert!((s.norm() - 1.0).abs() < 1e-14);
    for (a, b) in s.amplitudes().iter().zip(run.states[1].amplitudes()) {
        assert!((a - b).norm() < 1e-14);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let (model, table) = setup(1, 1.0, 0.5, grid, 0);
    let bad = StateVector::new(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
    assert!(matches!(
        run_trajectory(&model, &table, &bad, Mode::Linear, 0, 0),
        Err(PropagationError::NotNormalized { .. })
    ));
    assert!(matches!(
        run_trajectory(&model, &table, &uniform(3), Mode::Linear, 0, 0),
        Err(PropagationError::DimensionMismatch { .. })
    ));
    let o = table.obar0_matrix(0);
    let z = C64::new(0.0, 0.0);
    assert!(matches!(
        step_linear(&uniform(2), &model, (&o, &o), (z, z), 0.0, -0.1),
        Err(PropagationError::InvalidStep(_))
    ));
    let huge = C64::new(1e300, 0.0);
    assert!(matches!(
        step_linear(&uniform(2), &model, (&o, &o), (huge, huge), 0.0, 1e10),
        Err(PropagationError::NonFinite { .. })
    ));
}
