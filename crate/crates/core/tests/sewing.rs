use std::sync::Arc;

use roughmckv::controlled::{integral_lift, rough_integral, ControlledPath};
use roughmckv::rough_path::{chen_defect, geometricity_defect, lift_smooth_path};
use roughmckv::sewing::{sew, sew_on_grid, Germ};
use roughmckv::stochastic::{brownian_lift, sample_brownian, LiftMode};
use roughmckv::{Path, TimeGrid};

fn z(t: f64) -> f64 {
    (5.0 * t).sin() + 0.3 * (t - 0.5).signum() * (t - 0.5).abs().powf(0.45)
}

#[test]
fn second_order_germ_sews_to_the_chain_rule() {
    let germ = Germ::new(1, 1.35, |s, t, out| {
        let zs = z(s);
        let dz = z(t) - zs;
        out[0] = zs.cos() * dz - 0.5 * zs.sin() * dz * dz;
    });
    let grid = Arc::new(TimeGrid::dyadic(1.0, 6).unwrap());
    let r = sew(&germ, &grid, 10).unwrap();
    for i in 0..grid.len() {
        let exact = z(grid.t(i)).sin() - z(0.0).sin();
        assert!((r.integral.value(i)[0] - exact).abs() < 2e-3, "i = {i}");
    }
    assert!(r.fitted_zeta > 1.25, "zeta {}", r.fitted_zeta);
}

#[test]
fn first_order_germ_has_slower_remainder() {
    let second = Germ::new(1, 1.35, |s, t, out| {
        let dz = z(t) - z(s);
        out[0] = z(s).cos() * dz - 0.5 * z(s).sin() * dz * dz;
    });
    let first = Germ::new(1, 0.9, |s, t, out| out[0] = z(s).cos() * (z(t) - z(s)));
    let grid = Arc::new(TimeGrid::dyadic(1.0, 8).unwrap());
    let a = sew(&second, &grid, 4).unwrap().fitted_zeta;
    let b = sew(&first, &grid, 4).unwrap().fitted_zeta;
    assert!(a > b + 0.2, "second-order {a}, first-order {b}");
}

#[test]
fn grid_germ_is_a_running_sum() {
    let grid = Arc::new(TimeGrid::uniform(1.0, 5).unwrap());
    let r = sew_on_grid(1, &grid, |i, j, out| out[0] = (j * j - i * i) as f64).unwrap();
    assert_eq!(r.integral.value(5)[0], 25.0);
    assert!(r.remainder_report.max < 1e-12);
}

#[test]
fn rough_integral_of_cos_against_stratonovich_brownian() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 12).unwrap());
    let w = brownian_lift(
        &sample_brownian(1, &g, 4, 0).unwrap(),
        LiftMode::Stratonovich,
    )
    .unwrap();
    let y =
        ControlledPath::from_function(&w, 1, |x, y| y[0] = x[0].cos(), |x, d| d[0] = -x[0].sin())
            .unwrap();
    let ri = rough_integral(&y, &w).unwrap();
    let last = g.len() - 1;
    let exact = w.z().value(last)[0].sin();
    assert!((ri.x.value(last)[0] - exact).abs() < 2e-3);
}

#[test]
fn ito_integral_of_w_is_half_square_minus_half_time() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 14).unwrap());
    let w = brownian_lift(&sample_brownian(1, &g, 8, 2).unwrap(), LiftMode::Ito).unwrap();
    let y = ControlledPath::from_function(&w, 1, |x, y| y[0] = x[0], |_, d| d[0] = 1.0).unwrap();
    let ri = rough_integral(&y, &w).unwrap();
    let last = g.len() - 1;
    let wt = w.z().value(last)[0];
    assert!((ri.x.value(last)[0] - (0.5 * wt * wt - 0.5)).abs() < 0.03);
}

#[test]
fn integral_lift_of_a_geometric_path_is_geometric() {
    let g = Arc::new(TimeGrid::uniform(1.0, 64).unwrap());
    let p = Path::from_fn(g, 2, |t, v| {
        v[0] = (6.0 * t).cos();
        v[1] = t * t - t;
    });
    let z = lift_smooth_path(&p, 0.45).unwrap();
    let y = ControlledPath::from_function(
        &z,
        4,
        |x, y| y.copy_from_slice(&[x[1], 1.0, x[0].exp(), x[0]]),
        |x, d| d.copy_from_slice(&[0.0, 1.0, 0.0, 0.0, x[0].exp(), 0.0, 1.0, 0.0]),
    )
    .unwrap();
    let lift = integral_lift(&y, &z).unwrap();
    assert!(chen_defect(&lift).max < 1e-10);
    assert!(geometricity_defect(&lift).max < 1e-10);
}
