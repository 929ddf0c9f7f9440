//! Random rough drivers: Brownian paths and lifts, Itô coefficient integrals, integrated rough
//! fields, the mixed driver and accumulation statistics.

use std::sync::Arc;

use rayon::prelude::*;

use crate::controlled::{integral_lift, ControlledPath};
use crate::defect::linear_fit;
use crate::driver::RoughDriver;
use crate::error::{Error, Result};
use crate::field::{Atom, Basis};
use crate::grid::TimeGrid;
use crate::path::{add_outer, Path};
use crate::rng::StreamRng;
use crate::rough_path::RoughPath;

/// Doubles allowed for a level-2 coefficient table.
pub const COEFFICIENT_BUDGET: usize = 1 << 28;

/// A Brownian path on a uniform dyadic grid, reproducible from `(seed, stream)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub path: Path,
    pub seed: u64,
    pub stream: u64,
}

/// Samples `W` by dyadic Brownian-bridge refinement: the draw at each bridge node depends only on
/// the node, so a finer grid with the same seed passes through the coarse values.
pub fn sample_brownian(
    d: usize,
    grid: &Arc<TimeGrid>,
    seed: u64,
    stream: u64,
) -> Result<BrownianPath> {
    let level = grid.dyadic_level().ok_or_else(|| {
        Error::DegenerateGrid("Brownian sampling needs a uniform dyadic grid".into())
    })?;
    let rng = StreamRng::new(seed, stream);
    let n = 1usize << level;
    let horizon = grid.horizon();
    let mut v = vec![0.0; (n + 1) * d];
    let draw = |node: u64, c: usize| rng.normal(node * d as u64 + c as u64);
    for c in 0..d {
        v[n * d + c] = horizon.sqrt() * draw(1, c);
    }
    for l in 1..=level {
        let span = n >> (l - 1);
        let half = span / 2;
        let sd = (horizon / (1u64 << (l - 1)) as f64 / 4.0).sqrt();
        for k in (1..(1usize << l)).step_by(2) {
            let mid = k * half;
            let (lo, hi) = (mid - half, mid + half);
            let node = (1u64 << l) + k as u64;
            for c in 0..d {
                v[mid * d + c] = 0.5 * (v[lo * d + c] + v[hi * d + c]) + sd * draw(node, c);
            }
        }
    }
    Ok(BrownianPath {
        path: Path::new(grid.clone(), d, v)?,
        seed,
        stream,
    })
}

/// Integration convention for the second level of a Brownian lift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftMode {
    Ito,
    Stratonovich,
}

/// Hölder exponent assigned to Brownian lifts by default.
pub const BROWNIAN_ALPHA: f64 = 0.4;

/// Grid lift: left-point sums (Itô) or midpoint sums (Stratonovich).
pub fn brownian_lift(w: &BrownianPath, mode: LiftMode) -> Result<RoughPath> {
    let p = &w.path;
    let d = p.dim();
    let mut steps = vec![0.0; (p.len() - 1) * d * d];
    if mode == LiftMode::Stratonovich {
        let mut dw = vec![0.0; d];
        for (k, out) in steps.chunks_mut(d * d).enumerate() {
            p.increment_into(k, k + 1, &mut dw);
            add_outer(out, &dw, &dw, 0.5);
        }
    }
    RoughPath::from_steps(p.clone(), &steps, BROWNIAN_ALPHA)
}

/// Piecewise-linear time modulation `t -> m(t)` given by knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfile {
    pub knots: Vec<(f64, f64)>,
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        match k.iter().position(|(s, _)| *s >= t) {
            None => k.last().map_or(1.0, |p| p.1),
            Some(0) => k[0].1,
            Some(i) => {
                let ((t0, v0), (t1, v1)) = (k[i - 1], k[i]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Mean-field kernels `s^a(y, x) = sum_{k,l} sigma[a,k,l] chi_l(y) phi_k(x)` for each Brownian
/// direction `a`, and `b^j(y, x) = sum_{k,l} beta[j,k,l] chi_l(y) phi_k(x)` for each rough direction
/// `j`. Integrating `y` against a law gives `sigma(mu)` and `beta(mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFamily {
    pub basis: Arc<Basis>,
    /// Scalar profiles `chi_l`.
    pub profiles: Arc<Basis>,
    pub n_brownian: usize,
    pub n_rough: usize,
    pub sigma: Vec<f64>,
    pub beta: Vec<f64>,
    pub time_profile: Option<TimeProfile>,
}

/// Coefficients of `sigma(mu_t)` and `beta(mu_t)` along a measure path.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLaw {
    /// `s^a_k(t)` at index `a*K + k`.
    pub sigma: Path,
    /// `beta^j_k(t)` at `k*m + j`, with Gubinelli derivative from the measure's derivative.
    pub beta: ControlledPath,
}

fn sorted_mean(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

impl KernelFamily {
    pub fn new(
        basis: Arc<Basis>,
        profiles: Arc<Basis>,
        n_brownian: usize,
        n_rough: usize,
        sigma: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        if profiles.out_dim() != 1 || profiles.dim() != basis.dim() {
            return Err(Error::BasisMismatch(
                "profiles must be scalar functions on the state space".into(),
            ));
        }
        let (k, l) = (basis.len(), profiles.len());
        if sigma.len() != n_brownian * k * l {
            return Err(Error::Dimension {
                expected: n_brownian * k * l,
                got: sigma.len(),
            });
        }
        if beta.len() != n_rough * k * l {
            return Err(Error::Dimension {
                expected: n_rough * k * l,
                got: beta.len(),
            });
        }
        Ok(Self {
            basis,
            profiles,
            n_brownian,
            n_rough,
            sigma,
            beta,
            time_profile: None,
        })
    }

    pub fn with_time_profile(mut self, p: TimeProfile) -> Self {
        self.time_profile = Some(p);
        self
    }

    fn modulation(&self, t: f64) -> f64 {
        self.time_profile.as_ref().map_or(1.0, |p| p.eval(t))
    }

    /// `sigma^a(mu)` coefficients for a law given by the points `xs` (flattened, dimension `d`).
    pub fn sigma_of(&self, xs: &[f64]) -> Vec<f64> {
        let m = self.moments(xs);
        contract(&self.sigma, self.n_brownian, self.basis.len(), &m)
    }

    /// `beta^j(mu)` coefficients (index `j*K + k`) for a law given by the points `xs`.
    pub fn beta_of(&self, xs: &[f64]) -> Vec<f64> {
        let m = self.moments(xs);
        contract(&self.beta, self.n_rough, self.basis.len(), &m)
    }

    /// `mu(chi_l)` with order-independent summation.
    pub fn moments(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.basis.dim();
        let l = self.profiles.len();
        let mut cols = vec![Vec::with_capacity(xs.len() / d); l];
        let mut buf = vec![0.0; l];
        for x in xs.chunks(d) {
            self.profiles.values_into(x, &mut buf);
            for (c, v) in cols.iter_mut().zip(&buf) {
                c.push(*v);
            }
        }
        cols.iter_mut().map(|c| sorted_mean(c)).collect()
    }

    /// Coefficients along a particle measure path, with the derivative built from `gamma`, the
    /// Gubinelli derivative of the particles (coefficients at `k*m + j` on `basis`).
    pub fn freeze(&self, particles: &[Path], gamma: Option<&Path>) -> Result<FrozenLaw> {
        let first = particles
            .first()
            .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
        let grid = first.grid_arc().clone();
        let n = grid.len();
        let (kk, ll, m, nb) = (
            self.basis.len(),
            self.profiles.len(),
            self.n_rough,
            self.n_brownian,
        );
        let d = self.basis.dim();
        let mut sig = Path::zeros(grid.clone(), nb * kk);
        let mut y = Path::zeros(grid.clone(), kk * m);
        let mut yp = Path::zeros(grid.clone(), kk * m * m);
        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|t| {
                let mut xs = Vec::with_capacity(particles.len() * d);
                for p in particles {
                    xs.extend_from_slice(p.value(t));
                }
                let mom = self.moments(&xs);
                let md = self.modulation(grid.t(t));
                let s: Vec<f64> = contract(&self.sigma, nb, kk, &mom)
                    .iter()
                    .map(|v| v * md)
                    .collect();
                let b = contract(&self.beta, m, kk, &mom);
                let mut yv = vec![0.0; kk * m];
                for j in 0..m {
                    for k in 0..kk {
                        yv[k * m + j] = md * b[j * kk + k];
                    }
                }
                let mut ypv = vec![0.0; kk * m * m];
                if let Some(g) = gamma {
                    let dm = self.moment_derivatives(&xs, g.value(t));
                    for i in 0..m {
                        let col: Vec<f64> = (0..ll).map(|l| dm[l * m + i]).collect();
                        let db = contract(&self.beta, m, kk, &col);
                        for j in 0..m {
                            for k in 0..kk {
                                ypv[(k * m + j) * m + i] = md * db[j * kk + k];
                            }
                        }
                    }
                }
                (s, yv, ypv)
            })
            .collect();
        for (t, (s, yv, ypv)) in rows.into_iter().enumerate() {
            sig.value_mut(t).copy_from_slice(&s);
            y.value_mut(t).copy_from_slice(&yv);
            yp.value_mut(t).copy_from_slice(&ypv);
        }
        Ok(FrozenLaw {
            sigma: sig,
            beta: ControlledPath::new(y, yp, m)?,
        })
    }

    /// `mu(grad chi_l . gamma^i)` at index `l*m + i`.
    fn moment_derivatives(&self, xs: &[f64], gamma: &[f64]) -> Vec<f64> {
        let d = self.basis.dim();
        let (kk, ll, m) = (self.basis.len(), self.profiles.len(), self.n_rough);
        let mut cols = vec![Vec::with_capacity(xs.len() / d); ll * m];
        for x in xs.chunks(d) {
            let bj = self.basis.jets(x, 0);
            let pj = self.profiles.jets(x, 1);
            for i in 0..m {
                let mut g = vec![0.0; d];
                for k in 0..kk {
                    for (c, gc) in g.iter_mut().enumerate() {
                        *gc += gamma[k * m + i] * bj.val[k * d + c];
                    }
                }
                for l in 0..ll {
                    let v: f64 = (0..d).map(|c| pj.jac[l * d + c] * g[c]).sum();
                    cols[l * m + i].push(v);
                }
            }
        }
        cols.iter_mut().map(|c| sorted_mean(c)).collect()
    }
}

/// `out[a*K + k] = sum_l tensor[(a*K + k)*L + l] mom[l]`.
fn contract(tensor: &[f64], outer: usize, kk: usize, mom: &[f64]) -> Vec<f64> {
    let l = mom.len();
    (0..outer * kk)
        .map(|r| (0..l).map(|q| tensor[r * l + q] * mom[q]).sum())
        .collect()
}

fn check_budget(kk: usize, n: usize) -> Result<()> {
    if kk.saturating_mul(kk).saturating_mul(n) > COEFFICIENT_BUDGET {
        return Err(Error::BasisOverflow {
            atoms: kk,
            points: n,
        });
    }
    Ok(())
}

/// Coefficient rough path `(M, MM)` of `W^sigma` with Itô left-point second level:
/// `M_t = sum s^a(t_n) dW^a_n`, `MM_{0,n+1} = MM_{0n} + M_{0n} (x) dM_n`.
pub fn build_w_sigma(sigma: &Path, kk: usize, w: &Path) -> Result<RoughPath> {
    if sigma.grid() != w.grid() {
        return Err(Error::GridMismatch(
            "sigma coefficients and Brownian path grids differ".into(),
        ));
    }
    let nb = w.dim();
    if sigma.dim() != nb * kk {
        return Err(Error::Dimension {
            expected: nb * kk,
            got: sigma.dim(),
        });
    }
    let n = w.len();
    check_budget(kk, n)?;
    let mut vals = vec![0.0; n * kk];
    let mut anchors = vec![0.0; n * kk * kk];
    let mut dw = vec![0.0; nb];
    let mut dm = vec![0.0; kk];
    for s in 0..n - 1 {
        w.increment_into(s, s + 1, &mut dw);
        let c = sigma.value(s);
        for (k, v) in dm.iter_mut().enumerate() {
            *v = (0..nb).map(|a| c[a * kk + k] * dw[a]).sum();
        }
        let (head, tail) = anchors.split_at_mut((s + 1) * kk * kk);
        let prev = &head[s * kk * kk..];
        let next = &mut tail[..kk * kk];
        next.copy_from_slice(prev);
        add_outer(next, &vals[s * kk..(s + 1) * kk], &dm, 1.0);
        for k in 0..kk {
            vals[(s + 1) * kk + k] = vals[s * kk + k] + dm[k];
        }
    }
    let path = Path::new(w.grid_arc().clone(), kk, vals)?;
    RoughPath::from_anchors(path, anchors, BROWNIAN_ALPHA)
}

/// Coefficient rough path `(R, RR)` of `Z^beta = int beta dZ`.
pub fn build_z_beta(beta: &ControlledPath, z: &RoughPath) -> Result<RoughPath> {
    check_budget(beta.dim() / beta.rough_dim().max(1), z.len())?;
    integral_lift(beta, z)
}

/// The mixed driver with coefficients `A = M + R` and
/// `AA = MM + RR + int R (x) dM + int M (x) dR`, the last integral written by parts as
/// `M (x) R - int dM (x) R`.
pub fn build_mixed_driver(basis: Arc<Basis>, m: &RoughPath, r: &RoughPath) -> Result<RoughDriver> {
    if m.grid() != r.grid() {
        return Err(Error::GridMismatch(
            "Itô and rough parts live on different grids".into(),
        ));
    }
    let kk = basis.len();
    if m.dim() != kk || r.dim() != kk {
        return Err(Error::BasisMismatch(
            "coefficient dimensions differ from the basis".into(),
        ));
    }
    let n = m.len();
    check_budget(kk, n)?;
    let vals: Vec<f64> = m
        .z()
        .values()
        .iter()
        .zip(r.z().values())
        .map(|(a, b)| a + b)
        .collect();
    let mut anchors = vec![0.0; n * kk * kk];
    let mut c1 = vec![0.0; kk * kk];
    let mut ibp = vec![0.0; kk * kk];
    let mut mm = vec![0.0; kk * kk];
    let mut rr = vec![0.0; kk * kk];
    let mut dm = vec![0.0; kk];
    for t in 0..n {
        if t > 0 {
            m.z().increment_into(t - 1, t, &mut dm);
            add_outer(&mut c1, r.z().value(t - 1), &dm, 1.0);
            add_outer(&mut ibp, &dm, r.z().value(t), 1.0);
        }
        m.zz_into(0, t, &mut mm);
        r.zz_into(0, t, &mut rr);
        let out = &mut anchors[t * kk * kk..(t + 1) * kk * kk];
        let mt = m.z().value(t);
        let rt = r.z().value(t);
        for a in 0..kk {
            for b in 0..kk {
                let c2 = mt[a] * rt[b] - ibp[a * kk + b];
                out[a * kk + b] = mm[a * kk + b] + rr[a * kk + b] + c1[a * kk + b] + c2;
            }
        }
    }
    let r0 = r.z().value(0);
    let m0 = m.z().value(0);
    if r0.iter().chain(m0).any(|v| *v != 0.0) {
        return Err(Error::InvalidParameter(
            "coefficient paths must start at zero".into(),
        ));
    }
    let path = Path::new(m.grid_arc().clone(), kk, vals)?;
    let alpha = m.alpha().min(r.alpha());
    RoughDriver::new(basis, RoughPath::from_anchors(path, anchors, alpha)?)
}

/// Histogram and tail diagnostics of the accumulation variable.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationStats {
    pub n: Vec<usize>,
    /// `(value, count)` pairs in increasing value.
    pub histogram: Vec<(usize, usize)>,
    /// Slope and `R^2` of `log P(N > r)` against `r^2`.
    pub tail_slope: f64,
    pub tail_r2: f64,
    /// Leading coefficient of a quadratic fit of `log P(N > r)` in `r`.
    pub tail_curvature: f64,
    /// Monte-Carlo estimate of `E[exp(N)]`.
    pub exp_moment: f64,
    /// Per-sample `([F]_alpha, [FF]_{2 alpha}, N)` in coefficient-bound form.
    pub summary: Vec<(f64, f64, usize)>,
}

/// `N_beta(w_F, [0,T])` per sample and its tail statistics.
pub fn accumulation_statistics(drivers: &[RoughDriver], beta: f64) -> Result<AccumulationStats> {
    if drivers.len() < 100 {
        return Err(Error::TooFewSamples {
            needed: 100,
            got: drivers.len(),
        });
    }
    let summary: Vec<(f64, f64, usize)> = drivers
        .par_iter()
        .map(|d| {
            let (_, n) = d.accumulation(beta)?;
            let (f, ff) = d.holder_bounds(d.grid().horizon());
            Ok((f, ff, n))
        })
        .collect::<Result<_>>()?;
    let n: Vec<usize> = summary.iter().map(|s| s.2).collect();
    let max = n.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    n.iter().for_each(|&v| counts[v] += 1);
    let histogram: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(v, c)| (v, *c))
        .collect();
    let total = n.len() as f64;
    let tail: Vec<(f64, f64)> = (0..=max)
        .filter_map(|r| {
            let above = n.iter().filter(|&&v| v > r).count();
            (above > 0).then(|| (r as f64, (above as f64 / total).ln()))
        })
        .collect();
    let (tail_slope, _, tail_r2) = if tail.len() >= 2 {
        linear_fit(&tail.iter().map(|(r, l)| (r * r, *l)).collect::<Vec<_>>())
    } else {
        (0.0, 0.0, 0.0)
    };
    let tail_curvature = if tail.len() >= 3 {
        quadratic_fit(&tail)[2]
    } else {
        0.0
    };
    let exp_moment = n.iter().map(|&v| (v as f64).exp()).sum::<f64>() / total;
    Ok(AccumulationStats {
        n,
        histogram,
        tail_slope,
        tail_r2,
        tail_curvature,
        exp_moment,
        summary,
    })
}

/// Least-squares `c0 + c1 x + c2 x^2`.
fn quadratic_fit(pts: &[(f64, f64)]) -> [f64; 3] {
    let mut a = [[0.0f64; 4]; 3];
    for &(x, y) in pts {
        let p = [1.0, x, x * x];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += p[i] * p[j];
            }
            a[i][3] += p[i] * y;
        }
    }
    for c in 0..3 {
        let piv = (c..3)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap_or(c);
        a.swap(c, piv);
        if a[c][c] == 0.0 {
            return [0.0; 3];
        }
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]]
}

/// A single scalar Gaussian atom used as a constant-in-time noise coefficient field.
pub fn scalar_sigma_basis(width: f64) -> Arc<Basis> {
    Arc::new(Basis::new(1, 1, vec![Atom::bump(vec![0.0], width, vec![1.0])]).expect("valid atom"))
}
