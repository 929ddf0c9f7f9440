use std::sync::Arc;

use roughmckv::corpus::{self, corpus_options};
use roughmckv::driver::driver_from_rough_path;
use roughmckv::field::SmoothField;
use roughmckv::rde::{rk4_along_path, solve_davie_with, solve_picard_with, SolverOptions};
use roughmckv::Error;

#[test]
fn smooth_linear_reproduces_e() {
    let d = corpus::smooth_linear(10, 1.0).unwrap();
    let sol = solve_davie_with(&d, &[1.0], d.grid_arc(), &corpus_options()).unwrap();
    for (i, t) in d.grid().points().iter().enumerate() {
        assert!((sol.x.value(i)[0] - t.exp()).abs() < 1e-6);
    }
}

#[test]
fn davie_error_is_second_order_for_smooth_noise() {
    let err = |level: u32| {
        let (d, z) = corpus::smooth_geometric(level, 2).unwrap();
        let sol = solve_davie_with(&d, &[1.0], d.grid_arc(), &corpus_options()).unwrap();
        (0..z.len())
            .map(|i| (sol.x.value(i)[0] - z.z().value(i)[0].exp()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(8) / err(10);
    // third-order local error on a smooth path gives a global factor near 16 per two levels
    assert!(ratio > 10.0, "ratio {ratio}");
}

#[test]
fn nonlinear_field_agrees_with_mollified_ode() {
    let (_, z) = corpus::smooth_geometric(10, 4).unwrap();
    let basis = corpus::damped_identity_basis(1.5);
    let d = Arc::new(driver_from_rough_path(&z, basis.clone()).unwrap());
    let sol = solve_davie_with(&d, &[0.8], d.grid_arc(), &corpus_options()).unwrap();
    let ode = rk4_along_path(
        &[SmoothField::new(basis, vec![1.0]).unwrap()],
        z.z(),
        &[0.8],
        8,
    )
    .unwrap();
    assert!(sol.x.sup_distance(&ode) < 1e-5);
}

#[test]
fn picard_and_davie_agree() {
    let (d, _) = corpus::brownian_linear(13, 3).unwrap();
    let opts = corpus_options();
    let a = solve_davie_with(&d, &[1.0], d.grid_arc(), &opts).unwrap();
    let (b, trace) = solve_picard_with(&d, &[1.0], d.grid_arc(), 100, 1e-10, 0.05, &opts).unwrap();
    assert!(a.x.sup_distance(&b.x) < 1e-9);
    assert!(trace.max_iterations() <= 10);
}

#[test]
fn steps_beyond_the_admission_bound_are_refused() {
    let (d, _) = corpus::brownian_linear(8, 0).unwrap();
    let opts = SolverOptions {
        admission_c: 50.0,
        ..SolverOptions::default()
    };
    match solve_davie_with(&d, &[1.0], d.grid_arc(), &opts) {
        Err(Error::DriverTooRough { measured, .. }) => assert!(measured > 0.5),
        other => panic!("expected DriverTooRough, got {other:?}"),
    }
}

#[test]
fn remainder_exponents_on_smooth_noise() {
    let (d, _) = corpus::smooth_geometric(9, 0).unwrap();
    let sol = solve_davie_with(&d, &[1.0], d.grid_arc(), &corpus_options()).unwrap();
    let (sharp, natural) = sol.remainder_reports();
    assert!(sharp.slope >= 2.0 * 0.45 - 0.1);
    assert!(natural.slope >= 3.0 * 0.45 - 0.15);
}
