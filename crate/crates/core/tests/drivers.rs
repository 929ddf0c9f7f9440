use std::sync::Arc;

use proptest::prelude::*;
use roughmckv::corpus;
use roughmckv::driver::{
    default_chen_samples, driver_chen_defect, driver_from_quadrature, driver_from_rough_path,
    ChenSample,
};
use roughmckv::rough_path::lift_smooth_path;
use roughmckv::{Path, TimeGrid};

fn smooth(level: u32, a: f64, b: f64) -> roughmckv::RoughPath {
    let g = Arc::new(TimeGrid::dyadic(1.0, level).unwrap());
    let p = Path::from_fn(g, 1, |t, v| v[0] = a * (3.0 * t).sin() + b * t * t);
    lift_smooth_path(&p, 0.45).unwrap()
}

#[test]
fn linear_field_driver_matches_closed_form() {
    // phi(x) = x gives F_st(x) = Z_st x and FF_st(x, y) = ZZ_st x
    let z = smooth(6, 0.7, -0.4);
    let d = driver_from_rough_path(&z, corpus::identity_basis()).unwrap();
    for (i, j) in [(0, 64), (5, 17), (30, 31)] {
        let dz = z.z().increment(i, j)[0];
        let zz = z.zz(i, j)[0];
        assert!((d.eval_first(i, j, &[1.3])[0] - 1.3 * dz).abs() < 1e-14);
        assert!((d.eval_second(i, j, &[0.2], &[-0.8])[0] - 0.2 * zz).abs() < 1e-14);
        let davie = d.davie_increment(i, j, &[2.0])[0];
        assert!((davie - 2.0 * (dz + zz)).abs() < 1e-13);
    }
}

#[test]
fn quadrature_driver_integrates_time_dependent_coefficients() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 8).unwrap());
    let a = Path::from_fn(g, 1, |t, v| v[0] = 2.0 * t);
    let d = driver_from_quadrature(&a, corpus::identity_basis(), 0.45).unwrap();
    // int_0^1 2t dt = 1
    let f = d.eval_first(0, 256, &[1.0])[0];
    assert!((f - 1.0).abs() < 1e-4, "{f}");
}

#[test]
fn dropping_the_second_level_breaks_chen() {
    let z = smooth(7, 1.0, 0.5);
    let d = driver_from_rough_path(&z, corpus::damped_identity_basis(2.0)).unwrap();
    let samples = default_chen_samples(&d, 100);
    assert!(driver_chen_defect(&d, &samples).max < 1e-10);
    let broken = d.without_second_level().unwrap();
    assert!(driver_chen_defect(&broken, &samples).max > 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constructed_drivers_satisfy_chen(a in -2.0f64..2.0, b in -2.0f64..2.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let z = smooth(6, a, b);
        let d = driver_from_rough_path(&z, corpus::damped_identity_basis(1.5)).unwrap();
        let samples: Vec<ChenSample> = [(0, 20, 64), (3, 4, 9), (10, 40, 41)]
            .iter()
            .map(|&(s, u, t)| ChenSample { s, u, t, x: vec![x], y: vec![y] })
            .collect();
        prop_assert!(driver_chen_defect(&d, &samples).max < 1e-10);
    }
}

#[test]
fn coefficient_count_must_match_basis() {
    let z = smooth(4, 1.0, 0.0);
    assert!(driver_from_rough_path(&z, corpus::affine_basis()).is_err());
}
