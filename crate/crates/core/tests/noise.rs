use nmqsd::linalg::C64;
use nmqsd::noise::{
    covariance_check, sample_noise, shifted_noise_update, CorrelationKernel, NoiseShift, TabulatedKernel, TimeGrid,
};
use proptest::prelude::*;

#[test]
fn exponential_covariance_statistics() {
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let grid = TimeGrid::new(10.0, 200).unwrap();
    let report = covariance_check(&kernel, grid, 20_000, 3, 10).unwrap();
    assert_eq!(report.probes.len(), 100);
    assert!(
        report.passes(4.0),
        "max z {} pseudo {}",
        report.max_z(),
        report.max_pseudo_z()
    );
    let origin = report.probes[0];
    assert_eq!(origin.analytic, C64::new(0.25, 0.0));
}

#[test]
fn tabulated_covariance_statistics() {
    let grid = TimeGrid::new(4.0, 80).unwrap();
    let table = TabulatedKernel::from_fn(grid.dt(), 81, |tau| {
        C64::new(0.0, -1.5 * tau).exp() * (0.4 * (-0.8 * tau).exp())
    })
    .unwrap();
    let kernel = CorrelationKernel::tabulated(table);
    let report = covariance_check(&kernel, grid, 20_000, 5, 6).unwrap();
    assert!(
        report.passes(4.0),
        "max z {} pseudo {}",
        report.max_z(),
        report.max_pseudo_z()
    );
    // Complex kernel: the off-diagonal probes carry a phase.
    assert!(report.probes.iter().any(|p| p.analytic.im.abs() > 0.05));
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let a = sample_noise(&kernel, grid, 1, 0).unwrap();
    assert_eq!(a, sample_noise(&kernel, grid, 1, 0).unwrap());
    assert_ne!(a.values(), sample_noise(&kernel, grid, 1, 1).unwrap().values());
    assert_ne!(a.values(), sample_noise(&kernel, grid, 2, 0).unwrap().values());
}

#[test]
fn zero_shift_without_expectation() {
    let kernel = CorrelationKernel::exponential(1.0, 0.5).unwrap();
    let z = C64::new(0.3, -0.2);
    let (zt, mem) = shifted_noise_update(C64::new(0.0, 0.0), z, C64::new(0.0, 0.0), &kernel, 0.01).unwrap();
    assert_eq!((zt, mem), (z, C64::new(0.0, 0.0)));
    let off = CorrelationKernel::exponential(0.0, 0.5).unwrap();
    let (zt, mem) = shifted_noise_update(C64::new(0.0, 0.0), z, C64::new(1.0, 0.0), &off, 0.01).unwrap();
    assert_eq!((zt, mem), (z, C64::new(0.0, 0.0)));
}

#[test]
fn shift_converges_to_integral() {
    // Constant <L^dag> = 1: I(t) = c (1 - e^{-gamma t}) / gamma.
    let (gamma_rate, gamma) = (1.0, 0.7);
    let kernel = CorrelationKernel::exponential(gamma_rate, gamma).unwrap();
    let grid = TimeGrid::new(3.0, 300).unwrap();
    let mut shift = NoiseShift::new(&kernel, &grid);
    let one = C64::new(1.0, 0.0);
    for _ in 0..grid.n_steps() {
        shift.predict(one);
        shift.correct(one);
    }
    let exact = 0.5 * gamma_rate * (1.0 - (-gamma * 3.0f64).exp());
    assert!((shift.current().re - exact).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn alpha_is_hermitian(gamma_rate in 0.0f64..5.0, gamma in 0.01f64..50.0, t in 0.0f64..10.0, s in 0.0f64..10.0) {
        let k = CorrelationKernel::exponential(gamma_rate, gamma).unwrap();
        prop_assert_eq!(k.alpha(t, s).unwrap(), k.alpha(s, t).unwrap().conj());
        prop_assert!(k.alpha(t, s).unwrap().re <= k.alpha(t, t).unwrap().re + 1e-15);
    }

    #[test]
    fn shifted_recursion_matches_noise_shift(xs in proptest::collection::vec(-1.0f64..1.0, 2..40)) {
        // With piecewise-constant input both forms integrate the same thing.
        let kernel = CorrelationKernel::exponential(1.3, 0.9).unwrap();
        let grid = TimeGrid::new(0.05 * xs.len() as f64, xs.len()).unwrap();
        let mut mem = C64::new(0.0, 0.0);
        let mut shift = NoiseShift::new(&kernel, &grid);
        for &x in &xs {
            let x = C64::new(x, 0.0);
            let (_, next) = shifted_noise_update(mem, C64::new(0.0, 0.0), x, &kernel, grid.dt()).unwrap();
            mem = next;
            let p = shift.predict(x);
            prop_assert!((p - mem).norm() < 1e-12);
            shift.correct(x);
        }
    }
}
