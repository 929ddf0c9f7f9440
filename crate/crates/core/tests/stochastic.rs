use std::sync::Arc;

use roughmckv::controlled::ControlledPath;
use roughmckv::corpus;
use roughmckv::stochastic::{
    accumulation_statistics, brownian_lift, build_mixed_driver, build_w_sigma, build_z_beta,
    sample_brownian, LiftMode,
};
use roughmckv::{Error, Path, TimeGrid};

#[test]
fn stratonovich_and_ito_differ_by_half_the_bracket() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 9).unwrap());
    let w = sample_brownian(2, &g, 3, 7).unwrap();
    let s = brownian_lift(&w, LiftMode::Stratonovich).unwrap();
    let i = brownian_lift(&w, LiftMode::Ito).unwrap();
    let (a, b) = (37, 401);
    let mut bracket = [0.0; 4];
    for k in a..b {
        let dw = w.path.increment(k, k + 1);
        for p in 0..2 {
            for q in 0..2 {
                bracket[p * 2 + q] += 0.5 * dw[p] * dw[q];
            }
        }
    }
    for (c, expected) in bracket.iter().enumerate() {
        let diff = s.zz(a, b)[c] - i.zz(a, b)[c];
        assert!((diff - expected).abs() < 1e-12);
    }
}

#[test]
fn quadratic_variation_is_close_to_time() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 14).unwrap());
    let w = sample_brownian(1, &g, 1, 0).unwrap();
    let qv: f64 = (0..g.steps())
        .map(|k| w.path.increment(k, k + 1)[0].powi(2))
        .sum();
    // the standard deviation of the discrete bracket is sqrt(2 / 2^14) ~ 0.011
    assert!((qv - 1.0).abs() < 0.05, "{qv}");
}

#[test]
fn unit_sigma_reproduces_the_ito_lift() {
    let g = Arc::new(TimeGrid::dyadic(1.0, 8).unwrap());
    let w = sample_brownian(1, &g, 2, 5).unwrap();
    let sigma = Path::from_fn(g.clone(), 1, |_, v| v[0] = 1.0);
    let m = build_w_sigma(&sigma, 1, &w.path).unwrap();
    let ito = brownian_lift(&w, LiftMode::Ito).unwrap();
    for (i, j) in [(0, 256), (10, 11), (99, 200)] {
        assert!((m.z().increment(i, j)[0] - w.path.increment(i, j)[0]).abs() < 1e-13);
        assert!((m.zz(i, j)[0] - ito.zz(i, j)[0]).abs() < 1e-12);
    }
}

#[test]
fn mixed_driver_without_ito_part_is_the_rough_part() {
    let z = corpus::smooth_noise(7, 2).unwrap();
    let g = z.grid_arc().clone();
    let r = build_z_beta(&ControlledPath::constant(g.clone(), &[0.3, -1.2], 1), &z).unwrap();
    let m = build_w_sigma(
        &Path::zeros(g.clone(), 2),
        2,
        &sample_brownian(1, &g, 0, 0).unwrap().path,
    )
    .unwrap();
    let d = build_mixed_driver(corpus::affine_basis(), &m, &r).unwrap();
    for (i, j) in [(0, 128), (3, 90)] {
        for (a, b) in d.coefficients().zz(i, j).iter().zip(r.zz(i, j)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let g6 = Arc::new(TimeGrid::dyadic(1.0, 6).unwrap());
    let g7 = Arc::new(TimeGrid::dyadic(1.0, 7).unwrap());
    let w = sample_brownian(1, &g7, 0, 0).unwrap();
    let sigma = Path::zeros(g6, 1);
    assert!(matches!(
        build_w_sigma(&sigma, 1, &w.path),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn accumulation_needs_enough_samples() {
    let drivers = corpus::sigma_drivers(5, 0, 0, 10).unwrap();
    assert!(matches!(
        accumulation_statistics(&drivers, 1.0),
        Err(Error::TooFewSamples {
            needed: 100,
            got: 10
        })
    ));
}

#[test]
fn accumulation_histogram_counts_every_sample() {
    let drivers = corpus::sigma_drivers(6, 3, 0, 200).unwrap();
    let stats = accumulation_statistics(&drivers, 1.0).unwrap();
    let total: usize = stats.histogram.iter().map(|(_, c)| c).sum();
    assert_eq!(total, 200);
    assert_eq!(stats.n.len(), 200);
    assert!(stats.exp_moment.is_finite());
}
