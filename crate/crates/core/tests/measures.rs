use std::sync::Arc;

use itertools::Itertools;
use roughmckv::corpus::{self, corpus_options};
use roughmckv::measures::{
    mckv_fixed_point, EmpiricalPathMeasure, Ensemble, FixedPointOptions, ProbeSet,
};
use roughmckv::rng::StreamRng;
use roughmckv::transport::{wasserstein, TransportMethod};
use roughmckv::{Path, TimeGrid};

/// Exact `W_rho` between equal-size uniform clouds by enumerating every matching.
fn brute_force(a: &[Vec<f64>], b: &[Vec<f64>], rho: f64) -> f64 {
    let n = a.len();
    (0..n)
        .permutations(n)
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| {
                    let d: f64 = a[i].iter().zip(&b[j]).map(|(x, y)| (x - y).powi(2)).sum();
                    d.sqrt().powf(rho)
                })
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
        .powf(1.0 / rho)
}

fn cloud(n: usize, dim: usize, stream: u64) -> Vec<Vec<f64>> {
    let rng = StreamRng::new(21, stream);
    (0..n)
        .map(|i| (0..dim).map(|c| rng.normal((i * dim + c) as u64)).collect())
        .collect()
}

#[test]
fn transport_matches_brute_force() {
    for (dim, rho) in [(1, 1.0), (1, 2.0), (2, 1.0), (2, 2.0), (3, 1.5)] {
        let a = cloud(6, dim, 1);
        let b = cloud(6, dim, 2);
        let w = wasserstein(&a.concat(), &b.concat(), dim, rho).unwrap();
        let exact = brute_force(&a, &b, rho);
        assert!(
            (w.value - exact).abs() < 1e-10,
            "dim {dim} rho {rho}: {} vs {exact}",
            w.value
        );
        if dim == 1 {
            assert_eq!(w.method, TransportMethod::Sorted);
        }
    }
}

#[test]
fn empirical_statistics() {
    let g = Arc::new(TimeGrid::uniform(1.0, 2).unwrap());
    let paths: Vec<Path> = [1.0, 2.0, 6.0]
        .iter()
        .map(|&c| Path::from_fn(g.clone(), 1, |t, v| v[0] = c * (1.0 + t)))
        .collect();
    let m = EmpiricalPathMeasure::new(paths).unwrap();
    assert!((m.mean(2)[0] - 6.0).abs() < 1e-14);
    // population variance of {2, 4, 12} is 56/3
    assert!((m.variance(2)[0] - 56.0 / 3.0).abs() < 1e-12);
}

#[test]
fn linear_mean_field_follows_the_exponential_of_the_noise() {
    let z = corpus::smooth_noise(7, 2).unwrap();
    let n = 256;
    let kernels = corpus::linear_kernels(1.0, 0.0, 0.0).unwrap();
    let ens = Ensemble::sample(2, (0..n as u64).collect(), 0, z.grid_arc())
        .unwrap()
        .with_options(corpus_options());
    let init = corpus::linear_initial(&z, n, 2).unwrap();
    let opts = FixedPointOptions::new(ProbeSet::dictionary(1).unwrap());
    let (cm, trace) = mckv_fixed_point(&init, &kernels, &z, &ens, &opts).unwrap();
    assert!(trace.max_iterations() <= 5);
    let m0 = cm.measure.mean(0)[0];
    for t in 0..z.len() {
        let exact = m0 * z.z().value(t)[0].exp();
        assert!((cm.measure.mean(t)[0] - exact).abs() < 1e-3);
    }
}

#[test]
fn fixed_point_is_reproducible() {
    let z = corpus::smooth_noise(6, 4).unwrap();
    let n = 64;
    let kernels = corpus::nonlocal_kernels().unwrap();
    let run = || {
        let ens = Ensemble::sample(9, (0..n as u64).collect(), kernels.n_brownian, z.grid_arc())
            .unwrap()
            .with_options(corpus_options());
        let init = corpus::linear_initial(&z, n, 9).unwrap();
        let opts = FixedPointOptions::new(ProbeSet::dictionary(1).unwrap());
        mckv_fixed_point(&init, &kernels, &z, &ens, &opts)
            .unwrap()
            .0
    };
    let (a, b) = (run(), run());
    for (p, q) in a.measure.paths().iter().zip(b.measure.paths()) {
        assert_eq!(p.values(), q.values());
    }
}

#[test]
fn dictionary_has_thirty_two_probes() {
    let p = ProbeSet::dictionary(1).unwrap();
    assert_eq!(p.len(), 32);
    assert_eq!(p.id, "gauss32-d1");
}
