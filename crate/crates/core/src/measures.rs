//! Empirical path measures, controlled measures, probe metrics and the McKean-Vlasov fixed point.

use std::sync::Arc;

use rayon::prelude::*;

use crate::defect::{dyadic_strides, DefectReport};
use crate::error::{Error, Result};
use crate::field::{Atom, Basis, Lattice};
use crate::grid::TimeGrid;
use crate::path::{FnIncrements, Path};
use crate::rde::{solve_davie_with, SolverOptions};
use crate::rng::StreamRng;
use crate::rough_path::RoughPath;
use crate::stochastic::{
    build_mixed_driver, build_w_sigma, build_z_beta, sample_brownian, KernelFamily,
};
use crate::transport::wasserstein;
use crate::variation::{greedy_partition_grid, pvar_row};

/// `N` particle paths on a shared grid, each with weight `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPathMeasure {
    paths: Vec<Path>,
}

impl EmpiricalPathMeasure {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
        if paths
            .iter()
            .any(|p| p.grid() != first.grid() || p.dim() != first.dim())
        {
            return Err(Error::GridMismatch(
                "particle paths must share grid and dimension".into(),
            ));
        }
        Ok(Self { paths })
    }

    /// Particles resting at the given points (flattened, dimension `dim`) for all times.
    pub fn constant(grid: Arc<TimeGrid>, points: &[f64], dim: usize) -> Result<Self> {
        let paths = points
            .chunks(dim)
            .map(|x| Path::from_fn(grid.clone(), dim, |_, v| v.copy_from_slice(x)))
            .collect();
        Self::new(paths)
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.paths[0].grid()
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        self.paths[0].grid_arc()
    }

    /// Positions at grid index `t`, flattened.
    pub fn marginal(&self, t: usize) -> Vec<f64> {
        self.paths
            .iter()
            .flat_map(|p| p.value(t).iter().copied())
            .collect()
    }

    /// Componentwise mean at grid index `t`, summed in sorted order.
    pub fn mean(&self, t: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|c| {
                let mut v: Vec<f64> = self.paths.iter().map(|p| p.value(t)[c]).collect();
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }

    /// Sorted-order componentwise variance at grid index `t`.
    pub fn variance(&self, t: usize) -> Vec<f64> {
        let m = self.mean(t);
        (0..self.dim())
            .map(|c| {
                let mut v: Vec<f64> = self
                    .paths
                    .iter()
                    .map(|p| (p.value(t)[c] - m[c]).powi(2))
                    .collect();
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }

    /// `W_rho(mu_t, delta_0) = (mean |x_t|^rho)^{1/rho}`.
    pub fn moment(&self, t: usize, rho: f64) -> f64 {
        let mut v: Vec<f64> = self
            .paths
            .iter()
            .map(|p| crate::path::norm(p.value(t)).powf(rho))
            .collect();
        v.sort_by(f64::total_cmp);
        (v.iter().sum::<f64>() / v.len() as f64).powf(1.0 / rho)
    }
}

/// A measure on paths together with a Gubinelli derivative field path `gamma`.
///
/// `gamma` holds coefficients on `basis` at index `k*m + j` for atom `k` and rough direction `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledMeasure {
    pub measure: EmpiricalPathMeasure,
    pub gamma: Path,
    pub basis: Arc<Basis>,
    pub m: usize,
}

impl ControlledMeasure {
    pub fn new(
        measure: EmpiricalPathMeasure,
        gamma: Path,
        basis: Arc<Basis>,
        m: usize,
    ) -> Result<Self> {
        if gamma.grid() != measure.grid() {
            return Err(Error::GridMismatch("gamma and measure grids differ".into()));
        }
        if gamma.dim() != basis.len() * m {
            return Err(Error::Dimension {
                expected: basis.len() * m,
                got: gamma.dim(),
            });
        }
        Ok(Self {
            measure,
            gamma,
            basis,
            m,
        })
    }

    /// Particles at rest with a zero derivative field.
    pub fn at_rest(
        grid: Arc<TimeGrid>,
        points: &[f64],
        basis: Arc<Basis>,
        m: usize,
    ) -> Result<Self> {
        let measure = EmpiricalPathMeasure::constant(grid.clone(), points, basis.dim())?;
        let gamma = Path::zeros(grid, basis.len() * m);
        Self::new(measure, gamma, basis, m)
    }
}

/// A finite dictionary of scalar test functions normalized in a lattice `C^3` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub id: String,
    pub basis: Arc<Basis>,
}

impl ProbeSet {
    /// The default 32-atom dictionary on `R^dim`: 24 bumps on three widths and 8 ramps.
    pub fn dictionary(dim: usize) -> Result<Self> {
        let rng = StreamRng::new(0x9e0b, dim as u64);
        let center = |n: usize| -> Vec<f64> {
            if dim == 1 {
                vec![-3.0 + 6.0 * (n % 8) as f64 / 7.0]
            } else {
                (0..dim)
                    .map(|c| -3.0 + 6.0 * rng.uniform((n * dim + c) as u64))
                    .collect()
            }
        };
        let mut atoms = Vec::with_capacity(32);
        for (n, w) in [0.5, 1.0, 2.0]
            .iter()
            .flat_map(|w| std::iter::repeat_n(*w, 8))
            .enumerate()
        {
            atoms.push(Atom::bump(center(n), w, vec![1.0]));
        }
        for n in 0..8 {
            let mut u = vec![0.0; dim];
            u[n % dim] = 1.0;
            atoms.push(Atom::ramp(center(24 + n), 2.0, vec![1.0], u));
        }
        let raw = Basis::new(dim, 1, atoms.clone())?;
        let norms = raw.atom_sup_norms(&Lattice::standard(dim));
        for (a, n) in atoms.iter_mut().zip(&norms) {
            let s = n.iter().copied().fold(0.0, f64::max);
            a.direction = vec![1.0 / s];
        }
        Ok(Self {
            id: format!("gauss32-d{dim}"),
            basis: Arc::new(Basis::new(dim, 1, atoms)?),
        })
    }

    /// A dictionary made of the given scalar atoms, used as is.
    pub fn from_atoms(id: &str, dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("empty probe set".into()));
        }
        Ok(Self {
            id: id.to_string(),
            basis: Arc::new(Basis::new(dim, 1, atoms)?),
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

/// Probe observables `mu_t(phi)` (index `t*P + p`) and `mu_t(grad phi . gamma^j_t)`
/// (index `(t*P + p)*m + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeObservables {
    pub n_probes: usize,
    pub m: usize,
    pub value: Vec<f64>,
    pub derivative: Vec<f64>,
}

pub fn probe_observables(cm: &ControlledMeasure, probes: &ProbeSet) -> ProbeObservables {
    let grid = cm.measure.grid();
    let (np, m, d, kk) = (probes.len(), cm.m, cm.basis.dim(), cm.basis.len());
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.len())
        .into_par_iter()
        .map(|t| {
            let mut v = vec![0.0; np];
            let mut dv = vec![0.0; np * m];
            let g = cm.gamma.value(t);
            for p in cm.measure.paths() {
                let x = p.value(t);
                let pj = probes.basis.jets(x, 1);
                let bj = cm.basis.jets(x, 0);
                let mut gv = vec![0.0; m * d];
                for k in 0..kk {
                    for j in 0..m {
                        for c in 0..d {
                            gv[j * d + c] += g[k * m + j] * bj.val[k * d + c];
                        }
                    }
                }
                for q in 0..np {
                    v[q] += pj.val[q];
                    for j in 0..m {
                        dv[q * m + j] += (0..d)
                            .map(|c| pj.jac[q * d + c] * gv[j * d + c])
                            .sum::<f64>();
                    }
                }
            }
            let n = cm.measure.len() as f64;
            v.iter_mut().for_each(|x| *x /= n);
            dv.iter_mut().for_each(|x| *x /= n);
            (v, dv)
        })
        .collect();
    let mut value = Vec::with_capacity(grid.len() * np);
    let mut derivative = Vec::with_capacity(grid.len() * np * m);
    for (v, dv) in rows {
        value.extend(v);
        derivative.extend(dv);
    }
    ProbeObservables {
        n_probes: np,
        m,
        value,
        derivative,
    }
}

/// Controlled norm of one probe pair and its remainder exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeNorm {
    pub value: f64,
    pub remainder_exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureNorm {
    pub value: f64,
    pub probe_set: String,
    pub per_probe: Vec<ProbeNorm>,
}

/// `|f_0| + [f']_alpha + [f#]_{2 alpha}` for `f = a - b` built from observables.
fn controlled_norm(
    a: &ProbeObservables,
    b: Option<&ProbeObservables>,
    z: &RoughPath,
    q: usize,
) -> ProbeNorm {
    let (np, m) = (a.n_probes, a.m);
    let g = z.grid();
    let n = g.len();
    let alpha = z.alpha();
    let f = |t: usize| a.value[t * np + q] - b.map_or(0.0, |b| b.value[t * np + q]);
    let fp = |t: usize, j: usize| {
        a.derivative[(t * np + q) * m + j] - b.map_or(0.0, |b| b.derivative[(t * np + q) * m + j])
    };
    let sharp = |i: usize, j: usize| {
        let dz = z.z().increment(i, j);
        f(j) - f(i) - (0..m).map(|l| fp(i, l) * dz[l]).sum::<f64>()
    };
    let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let dt = g.t(j) - g.t(i);
            let dd: f64 = (0..m)
                .map(|l| (fp(j, l) - fp(i, l)).powi(2))
                .sum::<f64>()
                .sqrt();
            d1 = d1.max(dd / dt.powf(alpha));
            d2 = d2.max(sharp(i, j).abs() / dt.powf(2.0 * alpha));
        }
    }
    let top = (g.steps() as f64).log2().floor() as u32;
    let rep = DefectReport::dyadic_scan(
        g,
        &dyadic_strides(0, top.saturating_sub(1).max(1)),
        |i, j| sharp(i, j).abs(),
    );
    ProbeNorm {
        value: f(0).abs() + d1 + d2,
        remainder_exponent: rep.slope,
    }
}

/// Max over probes of the controlled norm of `(mu(phi), mu(grad phi . gamma))` relative to `z`.
pub fn controlled_measure_norm(
    cm: &ControlledMeasure,
    probes: &ProbeSet,
    z: &RoughPath,
) -> Result<MeasureNorm> {
    check_measure_base(cm, z)?;
    if probes.is_empty() {
        return Err(Error::InvalidParameter("empty probe set".into()));
    }
    let obs = probe_observables(cm, probes);
    let per_probe: Vec<ProbeNorm> = (0..probes.len())
        .into_par_iter()
        .map(|q| controlled_norm(&obs, None, z, q))
        .collect();
    let value = per_probe.iter().map(|p| p.value).fold(0.0, f64::max);
    Ok(MeasureNorm {
        value,
        probe_set: probes.id.clone(),
        per_probe,
    })
}

/// Probe-restricted distance between two controlled measures over the same rough path.
pub fn controlled_measure_distance(
    a: &ControlledMeasure,
    b: &ControlledMeasure,
    probes: &ProbeSet,
    z: &RoughPath,
) -> Result<f64> {
    check_measure_base(a, z)?;
    check_measure_base(b, z)?;
    let (oa, ob) = (probe_observables(a, probes), probe_observables(b, probes));
    Ok((0..probes.len())
        .into_par_iter()
        .map(|q| controlled_norm(&oa, Some(&ob), z, q).value)
        .reduce(|| 0.0, f64::max))
}

fn check_measure_base(cm: &ControlledMeasure, z: &RoughPath) -> Result<()> {
    if cm.measure.grid() != z.grid() {
        return Err(Error::GridMismatch(
            "controlled measure and rough path grids differ".into(),
        ));
    }
    if cm.m != z.dim() {
        return Err(Error::Dimension {
            expected: z.dim(),
            got: cm.m,
        });
    }
    Ok(())
}

/// Per-particle Brownian inputs and solver settings for particle solves.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub seed: u64,
    pub streams: Vec<u64>,
    /// Brownian path per particle on the rough path's grid; empty when there is no Brownian noise.
    pub brownian: Vec<Path>,
    pub options: SolverOptions,
}

impl Ensemble {
    /// Samples `n_brownian`-dimensional paths for each stream.
    pub fn sample(
        seed: u64,
        streams: Vec<u64>,
        n_brownian: usize,
        grid: &Arc<TimeGrid>,
    ) -> Result<Self> {
        let brownian = if n_brownian == 0 {
            Vec::new()
        } else {
            streams
                .par_iter()
                .map(|&s| sample_brownian(n_brownian, grid, seed, s).map(|b| b.path))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            seed,
            streams,
            brownian,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    /// Restriction to grid indices `lo..=hi`, re-based at time 0.
    pub fn window(&self, lo: usize, hi: usize, grid: &Arc<TimeGrid>) -> Result<Self> {
        let brownian = self
            .brownian
            .iter()
            .map(|p| {
                let d = p.dim();
                Path::new(grid.clone(), d, p.values()[lo * d..(hi + 1) * d].to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            seed: self.seed,
            streams: self.streams.clone(),
            brownian,
            options: self.options,
        })
    }
}

/// One application of the map `(mu, gamma) -> (law of x, beta(mu))` with the law frozen along `cm`.
pub fn mean_field_step(
    cm: &ControlledMeasure,
    kernels: &KernelFamily,
    z: &RoughPath,
    ensemble: &Ensemble,
) -> Result<ControlledMeasure> {
    check_measure_base(cm, z)?;
    if kernels.basis != cm.basis || kernels.n_rough != cm.m {
        return Err(Error::BasisMismatch(
            "kernel family and controlled measure disagree".into(),
        ));
    }
    let n = cm.measure.len();
    let noisy = kernels.n_brownian > 0;
    if noisy && ensemble.brownian.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: ensemble.brownian.len(),
        });
    }
    let frozen = kernels.freeze(cm.measure.paths(), Some(&cm.gamma))?;
    let r = build_z_beta(&frozen.beta, z)?;
    let kk = kernels.basis.len();
    let grid = z.grid_arc().clone();
    let quiet = if noisy {
        None
    } else {
        let zero = RoughPath::from_anchors(
            Path::zeros(grid.clone(), kk),
            vec![0.0; grid.len() * kk * kk],
            r.alpha(),
        )?;
        Some(Arc::new(build_mixed_driver(
            kernels.basis.clone(),
            &zero,
            &r,
        )?))
    };
    let paths: Vec<Path> = (0..n)
        .into_par_iter()
        .map(|i| {
            let driver = match &quiet {
                Some(d) => d.clone(),
                None => {
                    let mm = build_w_sigma(&frozen.sigma, kk, &ensemble.brownian[i])?;
                    Arc::new(build_mixed_driver(kernels.basis.clone(), &mm, &r)?)
                }
            };
            let x0 = cm.measure.paths()[i].value(0);
            solve_davie_with(&driver, x0, &grid, &ensemble.options).map(|s| s.x)
        })
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Particle {
                particle: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let measure = EmpiricalPathMeasure::new(paths)?;
    ControlledMeasure::new(measure, frozen.beta.y.clone(), cm.basis.clone(), cm.m)
}

/// Settings for [`mckv_fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Windows are greedy intervals of the control `[[Z]]_p^p + [[ZZ]]_{p/2}^{p/2}` at this level.
    pub window_beta: f64,
    pub rho: f64,
    /// Flag iterates whose `sup_t W_rho(mu_t, delta_0)` exceeds this budget.
    pub moment_budget: f64,
    pub probes: ProbeSet,
}

impl FixedPointOptions {
    pub fn new(probes: ProbeSet) -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            window_beta: 1e-3,
            rho: 2.0,
            moment_budget: f64::INFINITY,
            probes,
        }
    }
}

/// One Γ-iteration record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRecord {
    pub window: usize,
    pub iter: usize,
    pub wasserstein_gap: f64,
    pub gubinelli_gap: f64,
    pub controlled_gap: f64,
    pub moment: f64,
    pub moment_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    /// Window boundaries as grid indices.
    pub windows: Vec<(usize, usize)>,
    pub records: Vec<GapRecord>,
    pub probe_set: String,
}

impl FixedPointTrace {
    pub fn max_iterations(&self) -> usize {
        let mut best = 0;
        for w in 0..self.windows.len() {
            best = best.max(self.records.iter().filter(|r| r.window == w).count());
        }
        best
    }
}

/// Window partition of `[0, T]` by the rough path's own control.
pub fn rough_path_windows(z: &RoughPath, beta: f64) -> Result<Vec<usize>> {
    let p = 1.0 / z.alpha();
    let g = z.grid();
    let zz = |i: usize, j: usize| crate::path::norm(&z.zz(i, j));
    let second = FnIncrements { grid: g, norm: zz };
    let (cuts, _) = greedy_partition_grid(z.len(), beta, |lo, hi| {
        let a = pvar_row(z.z(), p, lo, hi).unwrap_or_default();
        let b = pvar_row(&second, p / 2.0, lo, hi).unwrap_or_default();
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    })?;
    Ok(cuts)
}

fn sup_wasserstein(a: &EmpiricalPathMeasure, b: &EmpiricalPathMeasure, rho: f64) -> Result<f64> {
    let n = a.grid().len();
    let picks: Vec<usize> = (0..5).map(|k| k * (n - 1) / 4).collect();
    let mut best: f64 = 0.0;
    for t in picks {
        best = best.max(wasserstein(&a.marginal(t), &b.marginal(t), a.dim(), rho)?.value);
    }
    Ok(best)
}

/// Particles moved by the frozen initial velocity: `x + sum_j (gamma_0^j . phi)(x) Z^j_{0t}`.
fn first_order_guess(
    start: &[f64],
    dim: usize,
    gamma: &Path,
    basis: &Basis,
    m: usize,
    z: &RoughPath,
) -> Result<EmpiricalPathMeasure> {
    let g0 = gamma.value(0);
    let kk = basis.len();
    let n = z.len();
    let paths = start
        .chunks(dim)
        .map(|x| {
            let vel: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    let c: Vec<f64> = (0..kk).map(|k| g0[k * m + j]).collect();
                    basis.combine(&c, x)
                })
                .collect();
            let mut v = Vec::with_capacity(n * dim);
            let mut dz = vec![0.0; m];
            for t in 0..n {
                z.z().increment_into(0, t, &mut dz);
                for i in 0..dim {
                    v.push(x[i] + (0..m).map(|j| vel[j][i] * dz[j]).sum::<f64>());
                }
            }
            Path::new(z.grid_arc().clone(), dim, v)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalPathMeasure::new(paths)
}

/// Iterates the mean-field map on successive windows until the probe distance between an iterate
/// and its image is at most `tol`, then concatenates the window fixed points.
pub fn mckv_fixed_point(
    initial: &ControlledMeasure,
    kernels: &KernelFamily,
    z: &RoughPath,
    ensemble: &Ensemble,
    opts: &FixedPointOptions,
) -> Result<(ControlledMeasure, FixedPointTrace)> {
    check_measure_base(initial, z)?;
    let cuts = rough_path_windows(z, opts.window_beta)?;
    let dim = initial.basis.dim();
    let (kk, m) = (initial.basis.len(), initial.m);
    let n_part = initial.measure.len();
    let n = z.len();
    let mut paths: Vec<Vec<f64>> = initial
        .measure
        .paths()
        .iter()
        .map(|p| {
            let mut v = vec![0.0; n * dim];
            v[..dim].copy_from_slice(p.value(0));
            v
        })
        .collect();
    let mut gamma = vec![0.0; n * kk * m];
    let mut trace = FixedPointTrace {
        windows: Vec::new(),
        records: Vec::new(),
        probe_set: opts.probes.id.clone(),
    };
    for (w, c) in cuts.windows(2).enumerate() {
        let (lo, hi) = (c[0], c[1]);
        let zw = z.window(lo, hi)?;
        let gw = zw.grid_arc().clone();
        let ew = ensemble.window(lo, hi, &gw)?;
        let start: Vec<f64> = paths
            .iter()
            .flat_map(|p| p[lo * dim..(lo + 1) * dim].iter().copied())
            .collect();
        let rest = EmpiricalPathMeasure::constant(gw.clone(), &start, dim)?;
        let beta0 = kernels.freeze(rest.paths(), None)?.beta.y;
        let guess = first_order_guess(&start, dim, &beta0, &initial.basis, m, &zw)?;
        let mut cur = ControlledMeasure::new(guess, beta0, initial.basis.clone(), m)?;
        let mut gaps = Vec::new();
        let mut rising = 0;
        loop {
            let next = mean_field_step(&cur, kernels, &zw, &ew)?;
            let controlled_gap = controlled_measure_distance(&next, &cur, &opts.probes, &zw)?;
            let wasserstein_gap = sup_wasserstein(&next.measure, &cur.measure, opts.rho)?;
            let gubinelli_gap = next.gamma.sup_distance(&cur.gamma);
            let moment = (0..gw.len())
                .map(|t| next.measure.moment(t, opts.rho))
                .fold(0.0, f64::max);
            trace.records.push(GapRecord {
                window: w,
                iter: gaps.len() + 1,
                wasserstein_gap,
                gubinelli_gap,
                controlled_gap,
                moment,
                moment_flag: moment > opts.moment_budget,
            });
            if let Some(&last) = gaps.last() {
                if controlled_gap >= last && controlled_gap > opts.tol {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            gaps.push(controlled_gap);
            cur = next;
            if controlled_gap <= opts.tol {
                break;
            }
            if rising >= 3 {
                return Err(Error::NonContraction { gaps });
            }
            if gaps.len() >= opts.max_iters {
                return Err(Error::NoConvergence {
                    iters: gaps.len(),
                    gaps,
                });
            }
        }
        for (i, p) in cur.measure.paths().iter().enumerate() {
            paths[i][lo * dim..(hi + 1) * dim].copy_from_slice(p.values());
        }
        gamma[lo * kk * m..(hi + 1) * kk * m].copy_from_slice(cur.gamma.values());
        trace.windows.push((lo, hi));
    }
    let grid = z.grid_arc().clone();
    let paths = paths
        .into_iter()
        .map(|v| Path::new(grid.clone(), dim, v))
        .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(paths.len(), n_part);
    let cm = ControlledMeasure::new(
        EmpiricalPathMeasure::new(paths)?,
        Path::new(grid, kk * m, gamma)?,
        initial.basis.clone(),
        m,
    )?;
    Ok((cm, trace))
}
