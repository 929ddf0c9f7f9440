//! Named experiment setups shared by tests, the acceptance suite and the command line.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::driver::{driver_from_quadrature, driver_from_rough_path, RoughDriver};
use crate::error::Result;
use crate::field::{Atom, Basis};
use crate::grid::TimeGrid;
use crate::measures::{ControlledMeasure, EmpiricalPathMeasure};
use crate::path::Path;
use crate::rde::solve_davie_with;
use crate::rng::StreamRng;
use crate::rough_path::{lift_smooth_path, RoughPath};
use crate::stochastic::{
    brownian_lift, build_w_sigma, sample_brownian, scalar_sigma_basis, KernelFamily, LiftMode,
};

/// Hölder exponent assigned to smooth noises.
pub const SMOOTH_ALPHA: f64 = 0.45;

/// Admission constant used with the linear corpora, whose lattice norms of unbounded atoms make
/// the default coefficient-bound control pessimistic.
pub const CORPUS_ADMISSION: f64 = 1.0;

/// Solver options for the corpora.
pub fn corpus_options() -> crate::rde::SolverOptions {
    crate::rde::SolverOptions {
        admission_c: CORPUS_ADMISSION,
        ..Default::default()
    }
}

/// Stream offset for initial-condition draws, disjoint from Brownian particle streams.
pub const INITIAL_STREAM: u64 = 1 << 40;

/// `phi(x) = x` on `R` as a single undamped ramp atom.
pub fn identity_basis() -> Arc<Basis> {
    Arc::new(
        Basis::new(
            1,
            1,
            vec![Atom::ramp(vec![0.0], f64::INFINITY, vec![1.0], vec![1.0])],
        )
        .expect("valid atom"),
    )
}

/// `phi(x) = x exp(-x^2 / (2 w^2))`, close to the identity on `[-w/5, w/5]`.
pub fn damped_identity_basis(width: f64) -> Arc<Basis> {
    Arc::new(
        Basis::new(
            1,
            1,
            vec![Atom::ramp(vec![0.0], width, vec![1.0], vec![1.0])],
        )
        .expect("valid atom"),
    )
}

/// `{1, x}` on `R`.
pub fn affine_basis() -> Arc<Basis> {
    Arc::new(
        Basis::new(
            1,
            1,
            vec![
                Atom::constant(1, vec![1.0]),
                Atom::ramp(vec![0.0], f64::INFINITY, vec![1.0], vec![1.0]),
            ],
        )
        .expect("valid atoms"),
    )
}

/// Scalar profiles `{1, y}` on `R`.
pub fn affine_profiles() -> Arc<Basis> {
    affine_basis()
}

/// Driver of `dx = lambda x dt` on `[0, 1]` with `2^level` steps.
pub fn smooth_linear(level: u32, lambda: f64) -> Result<Arc<RoughDriver>> {
    let g = Arc::new(TimeGrid::dyadic(1.0, level)?);
    let a = Path::from_fn(g, 1, |_, v| v[0] = lambda);
    Ok(Arc::new(driver_from_quadrature(
        &a,
        identity_basis(),
        SMOOTH_ALPHA,
    )?))
}

/// A smooth one-dimensional noise on `[0, 1]` with seed-dependent phase and amplitude.
pub fn smooth_noise(level: u32, seed: u64) -> Result<RoughPath> {
    let rng = StreamRng::new(seed, 0x5300);
    let phase = 2.0 * PI * rng.uniform(0);
    let amp = 0.4 + 0.4 * rng.uniform(1);
    let drift = rng.uniform(2) - 0.5;
    let g = Arc::new(TimeGrid::dyadic(1.0, level)?);
    let z = Path::from_fn(g, 1, |t, v| {
        v[0] = amp * ((2.0 * PI * t + phase).sin() - phase.sin()) + drift * t
    });
    lift_smooth_path(&z, SMOOTH_ALPHA)
}

/// Stratonovich lift of a one-dimensional Brownian path on `[0, 1]`.
pub fn brownian_noise(level: u32, seed: u64, stream: u64) -> Result<RoughPath> {
    let g = Arc::new(TimeGrid::dyadic(1.0, level)?);
    brownian_lift(
        &sample_brownian(1, &g, seed, stream)?,
        LiftMode::Stratonovich,
    )
}

/// `dx = b(x) dZ` with `b` the damped identity of width 20 and Brownian `Z`.
pub fn brownian_linear(level: u32, seed: u64) -> Result<(Arc<RoughDriver>, RoughPath)> {
    let z = brownian_noise(level, seed, 0)?;
    let d = driver_from_rough_path(&z, damped_identity_basis(20.0))?;
    Ok((Arc::new(d), z))
}

/// `dx = x dZ` with smooth `Z`.
pub fn smooth_geometric(level: u32, seed: u64) -> Result<(Arc<RoughDriver>, RoughPath)> {
    let z = smooth_noise(level, seed)?;
    let d = driver_from_rough_path(&z, identity_basis())?;
    Ok((Arc::new(d), z))
}

/// `n` initial positions drawn from `N(mean, sd^2)`.
pub fn gaussian_initial(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let rng = StreamRng::new(seed, INITIAL_STREAM);
    (0..n).map(|i| mean + sd * rng.normal(i as u64)).collect()
}

/// Linear mean-field kernels on `R` with one rough direction:
/// `beta(mu)(x) = c_mean * mean(mu) + c_local * x` and `sigma(mu)(x) = s0`.
pub fn linear_kernels(c_mean: f64, c_local: f64, s0: f64) -> Result<KernelFamily> {
    let basis = affine_basis();
    let profiles = affine_profiles();
    let nb = usize::from(s0 != 0.0);
    // index (j*K + k)*L + l with atoms {1, x} and profiles {1, y}
    let beta = vec![0.0, c_mean, c_local, 0.0];
    let sigma = if nb == 1 {
        vec![s0, 0.0, 0.0, 0.0]
    } else {
        Vec::new()
    };
    KernelFamily::new(basis, profiles, nb, 1, sigma, beta)
}

/// The nonlocal linear mean-field corpus: `beta(mu)(x) = (mean(mu) - x / 2) / 5`, `sigma = 0.2`.
pub fn nonlocal_kernels() -> Result<KernelFamily> {
    linear_kernels(0.2, -0.1, 0.2)
}

/// Deterministic flow of `dx = x dZ` with smooth `Z`, started from `n` draws of `N(1, 0.5^2)`.
pub fn flow_sigma0(
    level: u32,
    seed: u64,
    n: usize,
) -> Result<(RoughPath, Arc<RoughDriver>, EmpiricalPathMeasure)> {
    let (d, z) = smooth_geometric(level, seed)?;
    let grid = z.grid_arc().clone();
    let opts = corpus_options();
    let paths = gaussian_initial(n, 1.0, 0.5, seed)
        .par_iter()
        .map(|&x0| solve_davie_with(&d, &[x0], &grid, &opts).map(|s| s.x))
        .collect::<Result<Vec<_>>>()?;
    Ok((z, d, EmpiricalPathMeasure::new(paths)?))
}

/// Particles at rest at `N(1, 0.5^2)` draws, on the grid of `z`.
pub fn linear_initial(z: &RoughPath, n: usize, seed: u64) -> Result<ControlledMeasure> {
    let x0 = gaussian_initial(n, 1.0, 0.5, seed);
    ControlledMeasure::at_rest(z.grid_arc().clone(), &x0, affine_basis(), 1)
}

/// Drivers `W^sigma` of a unit-amplitude scalar Gaussian atom along `n` independent Brownian
/// paths on `[0, 1]`, one per stream starting at `first_stream`.
pub fn sigma_drivers(
    level: u32,
    seed: u64,
    first_stream: u64,
    n: usize,
) -> Result<Vec<RoughDriver>> {
    let grid = Arc::new(TimeGrid::dyadic(1.0, level)?);
    let basis = scalar_sigma_basis(1.0);
    let sigma = Path::from_fn(grid.clone(), 1, |_, v| v[0] = 1.0);
    (0..n as u64)
        .into_par_iter()
        .map(|s| {
            let w = sample_brownian(1, &grid, seed, first_stream + s)?;
            RoughDriver::new(basis.clone(), build_w_sigma(&sigma, 1, &w.path)?)
        })
        .collect()
}

/// Registry of experiment identifiers.
pub const EXPERIMENTS: &[&str] = &[
    "smooth-linear",
    "brownian-linear",
    "meanfield-linear",
    "meanfield-nonlocal",
    "flow-sigma0",
    "sigma-tail",
];
