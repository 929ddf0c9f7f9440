//! Unbounded rough drivers acting on test functions, and defect checks showing that empirical
//! particle laws solve linear and nonlocal rough Fokker-Planck equations.

use std::sync::Arc;

use rayon::prelude::*;

use crate::controlled::{integral_germ, ControlledPath};
use crate::defect::{linear_fit, DefectReport};
use crate::driver::{ChenSample, RoughDriver};
use crate::error::{Error, Result};
use crate::field::{Basis, BasisJets, SmoothField};
use crate::grid::TimeGrid;
use crate::measures::{ControlledMeasure, Ensemble, ProbeSet};
use crate::path::Path;
use crate::rough_path::RoughPath;
use crate::stochastic::{build_z_beta, KernelFamily};

/// Number of particle sub-batches used for confidence bands.
pub const BATCHES: usize = 16;

/// Two-sided 95% Student quantile with `BATCHES - 1` degrees of freedom.
pub const T_QUANTILE: f64 = 2.131;

/// The pair `(B1, B2)` generated by a coefficient rough path `(A, AA)` on a field basis:
/// `B1_st f = A^k_st L_k f` and `B2_st f = AA^{kl}_st L_l L_k f` with `L_k = phi_k . grad`.
#[derive(Debug, Clone)]
pub struct UnboundedRoughDriver {
    basis: Arc<Basis>,
    coeff: RoughPath,
}

/// First and second Lie derivatives of a scalar function along the basis fields at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct LieJets {
    /// `L_k f` at `k`.
    pub first: Vec<f64>,
    /// `L_l L_k f` at `l*K + k`.
    pub second: Vec<f64>,
}

impl UnboundedRoughDriver {
    pub fn new(basis: Arc<Basis>, coeff: RoughPath) -> Result<Self> {
        if basis.out_dim() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "fields must map R^{} to itself, got out_dim {}",
                basis.dim(),
                basis.out_dim()
            )));
        }
        if coeff.dim() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficient components for a basis of {} atoms",
                coeff.dim(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeff })
    }

    pub fn from_driver(d: &RoughDriver) -> Self {
        Self {
            basis: d.basis().clone(),
            coeff: d.coefficients().clone(),
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &RoughPath {
        &self.coeff
    }

    pub fn grid(&self) -> &TimeGrid {
        self.coeff.grid()
    }

    pub fn alpha(&self) -> f64 {
        self.coeff.alpha()
    }

    /// Lie derivatives of every scalar probe atom at `x`.
    pub fn lie_jets(&self, probes: &Basis, x: &[f64]) -> Vec<LieJets> {
        let kk = self.basis.len();
        let pj = probes.jets(x, 2);
        let bj = self.basis.jets(x, 1);
        (0..probes.len())
            .map(|p| {
                let mut first = vec![0.0; kk];
                let mut second = vec![0.0; kk * kk];
                self.lie_from_jets(&pj, &bj, p, &mut first, &mut second);
                LieJets { first, second }
            })
            .collect()
    }

    /// Lie derivatives of probe `p` from precomputed probe jets (order 2) and basis jets (order 1).
    pub fn lie_from_jets(
        &self,
        pj: &BasisJets,
        bj: &BasisJets,
        p: usize,
        first: &mut [f64],
        second: &mut [f64],
    ) {
        let d = self.basis.dim();
        let kk = self.basis.len();
        let grad = &pj.jac[p * d..(p + 1) * d];
        let hess = &pj.hess[p * d * d..(p + 1) * d * d];
        for (k, f) in first.iter_mut().enumerate() {
            *f = (0..d).map(|c| bj.val[k * d + c] * grad[c]).sum();
        }
        for l in 0..kk {
            for k in 0..kk {
                let mut acc = 0.0;
                for i in 0..d {
                    let fl = bj.val[l * d + i];
                    if fl == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for c in 0..d {
                        inner += bj.jac[(k * d + c) * d + i] * grad[c]
                            + bj.val[k * d + c] * hess[i * d + c];
                    }
                    acc += fl * inner;
                }
                second[l * kk + k] = acc;
            }
        }
    }

    /// `(B1_ij f(x), B2_ij f(x))` from the Lie derivatives of `f` at `x`.
    pub fn apply(&self, i: usize, j: usize, lie: &LieJets) -> [f64; 2] {
        let kk = self.basis.len();
        let a = self.coeff.z().increment(i, j);
        let aa = self.coeff.zz(i, j);
        let b1 = a.iter().zip(&lie.first).map(|(c, v)| c * v).sum();
        let mut b2 = 0.0;
        for k in 0..kk {
            for l in 0..kk {
                b2 += aa[k * kk + l] * lie.second[l * kk + k];
            }
        }
        [b1, b2]
    }

    fn field(&self, i: usize, j: usize) -> SmoothField {
        SmoothField {
            basis: self.basis.clone(),
            coeffs: self.coeff.z().increment(i, j),
        }
    }
}

/// `urd_from_rough_path`: the unbounded rough driver of a rough path of fields given by its
/// coefficients on `basis`.
pub fn urd_from_rough_path(x: &RoughPath, basis: Arc<Basis>) -> Result<UnboundedRoughDriver> {
    UnboundedRoughDriver::new(basis, x.clone())
}

/// Max over samples and probes of `|delta B1_sut f|` and `|delta B2_sut f - B1_ut B1_su f|`, the
/// composition evaluated from the fields and their Jacobians at `x`.
pub fn urd_chen_defect(
    u: &UnboundedRoughDriver,
    probes: &Basis,
    samples: &[ChenSample],
) -> DefectReport {
    let d = u.basis.dim();
    let g = u.grid();
    let mut best = (0.0, None);
    for sm in samples {
        let x = &sm.x;
        let lie = u.lie_jets(probes, x);
        let pj = probes.jets(x, 2);
        let inner = u.field(sm.s, sm.u);
        let outer = u.field(sm.u, sm.t).eval(x);
        let y = inner.eval(x);
        let jac = inner.jacobian(x);
        for (p, l) in lie.iter().enumerate() {
            let grad = &pj.jac[p * d..(p + 1) * d];
            let hess = &pj.hess[p * d * d..(p + 1) * d * d];
            let st = u.apply(sm.s, sm.t, l);
            let su = u.apply(sm.s, sm.u, l);
            let ut = u.apply(sm.u, sm.t, l);
            let mut comp = 0.0;
            for i in 0..d {
                let mut dv = 0.0;
                for c in 0..d {
                    dv += jac[c * d + i] * grad[c] + y[c] * hess[i * d + c];
                }
                comp += outer[i] * dv;
            }
            let v = (st[0] - su[0] - ut[0])
                .abs()
                .max((st[1] - su[1] - ut[1] - comp).abs());
            if v > best.0 {
                best = (v, Some((g.t(sm.s), g.t(sm.t))));
            }
        }
    }
    DefectReport::scalar(best.0, best.1)
}

/// Diffusion fields `sigma^a(t, x) = sum_k c[a*K + k](t) phi_k(x)`, one per Brownian component.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    pub basis: Arc<Basis>,
    pub coeffs: Path,
    pub n_brownian: usize,
}

impl Diffusion {
    pub fn new(basis: Arc<Basis>, coeffs: Path, n_brownian: usize) -> Result<Self> {
        if coeffs.dim() != n_brownian * basis.len() {
            return Err(Error::Dimension {
                expected: n_brownian * basis.len(),
                got: coeffs.dim(),
            });
        }
        Ok(Self {
            basis,
            coeffs,
            n_brownian,
        })
    }

    /// `sigma^a(t_n, x)` at `a*d + c`.
    pub fn sigma_at(&self, n: usize, x: &[f64]) -> Vec<f64> {
        let kk = self.basis.len();
        let c = self.coeffs.value(n);
        (0..self.n_brownian)
            .flat_map(|a| self.basis.combine(&c[a * kk..(a + 1) * kk], x))
            .collect()
    }
}

/// The particle system whose empirical law is checked.
#[derive(Debug, Clone, Copy)]
pub struct ParticleLaw<'a> {
    pub paths: &'a [Path],
    /// Brownian path per particle; may be empty when there is no diffusion.
    pub brownian: &'a [Path],
    pub diffusion: Option<&'a Diffusion>,
}

/// Settings for defect checks.
#[derive(Debug, Clone, PartialEq)]
pub struct FpOptions {
    /// Grid strides defining the dyadic scales, coarsest first.
    pub strides: Vec<usize>,
    pub slack: f64,
    /// Multiplier applied to the diffusion in the second-order term only.
    pub sigma_scale: f64,
}

impl FpOptions {
    /// Six dyadic scales `steps/2, ..., steps/64`.
    pub fn for_grid(grid: &TimeGrid) -> Self {
        let n = grid.steps();
        Self {
            strides: (1..=6).map(|k| n >> k).filter(|s| *s > 0).collect(),
            slack: 0.2,
            sigma_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpDefectValue {
    pub probe: usize,
    pub s: f64,
    pub t: f64,
    pub defect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FpVerdict {
    Pass,
    Fail,
    /// Monte Carlo noise hides the defect at too many scales; `required_n` particles would resolve it.
    Inconclusive {
        required_n: usize,
    },
}

impl std::fmt::Display for FpVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FpVerdict::Pass => write!(f, "PASS"),
            FpVerdict::Fail => write!(f, "FAIL"),
            FpVerdict::Inconclusive { required_n } => {
                write!(f, "INCONCLUSIVE(required_n={required_n})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpDefectReport {
    pub values: Vec<FpDefectValue>,
    pub scales: Vec<f64>,
    /// Largest `|defect|` at each scale.
    pub maxima: Vec<f64>,
    /// Confidence half-width attached to each maximum.
    pub noise: Vec<f64>,
    /// Number of leading scales whose maximum exceeds its noise.
    pub resolved: usize,
    pub exponent: f64,
    pub r2: f64,
    pub threshold: f64,
    pub verdict: FpVerdict,
    pub probe_set: String,
    pub particles: usize,
}

impl FpDefectReport {
    fn assemble(
        values: Vec<FpDefectValue>,
        scales: Vec<f64>,
        maxima: Vec<f64>,
        noise: Vec<f64>,
        threshold: f64,
        probe_set: String,
        particles: usize,
    ) -> Self {
        let resolved = maxima
            .iter()
            .zip(&noise)
            .take_while(|(m, c)| **c == 0.0 || **m > **c)
            .count();
        let pts: Vec<(f64, f64)> = scales[..resolved]
            .iter()
            .zip(&maxima[..resolved])
            .filter(|(_, m)| **m > 0.0)
            .map(|(s, m)| (s.ln(), m.ln()))
            .collect();
        let all_zero = maxima[..resolved].iter().all(|m| *m == 0.0);
        let (exponent, r2) = if all_zero && resolved > 0 {
            (f64::INFINITY, 1.0)
        } else {
            let (s, _, r2) = linear_fit(&pts);
            (s, r2)
        };
        let verdict = if resolved < 3 {
            let k = resolved.min(maxima.len().saturating_sub(1));
            let ratio = if maxima[k] > 0.0 {
                2.0 * noise[k] / maxima[k]
            } else {
                2.0
            };
            FpVerdict::Inconclusive {
                required_n: (particles as f64 * ratio * ratio).ceil() as usize,
            }
        } else if exponent >= threshold {
            FpVerdict::Pass
        } else {
            FpVerdict::Fail
        };
        Self {
            values,
            scales,
            maxima,
            noise,
            resolved,
            exponent,
            r2,
            threshold,
            verdict,
            probe_set,
            particles,
        }
    }

    /// Plain `key=value` summary lines.
    pub fn summary(&self) -> String {
        format!(
            "verdict={}\nexponent={}\nthreshold={}\nresolved_scales={}\nscales={}\nparticles={}\nprobe_set={}\n",
            self.verdict,
            self.exponent,
            self.threshold,
            self.resolved,
            self.scales.len(),
            self.particles,
            self.probe_set
        )
    }
}

fn batch_of(i: usize, n: usize) -> usize {
    i * BATCHES / n
}

/// Per-time batch means of per-particle probe statistics, laid out as `[batch][probe][q]`.
struct BatchStats {
    q: usize,
    probes: usize,
    /// Per time index.
    rows: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl BatchStats {
    fn get(&self, n: usize, b: usize, p: usize, q: usize) -> f64 {
        self.rows[n][(b * self.probes + p) * self.q + q]
    }

    fn collect(
        n_times: usize,
        n_part: usize,
        probes: usize,
        q: usize,
        per: impl Fn(usize, usize, &mut [f64]) + Sync,
    ) -> Self {
        let mut sizes = vec![0; BATCHES];
        for i in 0..n_part {
            sizes[batch_of(i, n_part)] += 1;
        }
        let rows = (0..n_times)
            .into_par_iter()
            .map(|n| {
                let mut acc = vec![0.0; BATCHES * probes * q];
                let mut buf = vec![0.0; probes * q];
                for i in 0..n_part {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    per(n, i, &mut buf);
                    let b = batch_of(i, n_part);
                    for (a, v) in acc[b * probes * q..(b + 1) * probes * q]
                        .iter_mut()
                        .zip(&buf)
                    {
                        *a += v;
                    }
                }
                for (b, chunk) in acc.chunks_mut(probes * q).enumerate() {
                    chunk.iter_mut().for_each(|v| *v /= sizes[b] as f64);
                }
                acc
            })
            .collect();
        Self {
            q,
            probes,
            rows,
            sizes,
        }
    }
}

/// Weighted mean and Student half-width across batch values.
fn mean_and_band(vals: &[f64], sizes: &[usize]) -> (f64, f64) {
    let total: usize = sizes.iter().sum();
    let mean: f64 = vals
        .iter()
        .zip(sizes)
        .map(|(v, s)| v * *s as f64)
        .sum::<f64>()
        / total as f64;
    let b = vals.len() as f64;
    let plain = vals.iter().sum::<f64>() / b;
    let var = vals.iter().map(|v| (v - plain).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, T_QUANTILE * (var / b).sqrt())
}

fn check_law(law: &ParticleLaw<'_>, grid: &TimeGrid) -> Result<()> {
    if law.paths.len() < BATCHES {
        return Err(Error::TooFewSamples {
            needed: BATCHES,
            got: law.paths.len(),
        });
    }
    for p in law.paths {
        if p.grid() != grid {
            return Err(Error::GridMismatch(
                "particle paths and driver live on different grids".into(),
            ));
        }
    }
    if let Some(df) = law.diffusion {
        if law.brownian.len() != law.paths.len() {
            return Err(Error::Dimension {
                expected: law.paths.len(),
                got: law.brownian.len(),
            });
        }
        if df.coeffs.grid() != grid || df.basis.dim() != law.paths[0].dim() {
            return Err(Error::GridMismatch(
                "diffusion coefficients do not match the particle grid".into(),
            ));
        }
    }
    Ok(())
}

/// The second-order term `sum_a 0.5 sigma^a . hess sigma^a` and the control variate
/// `grad . sigma^a dW^a + 0.5 sigma^a . hess sigma^b (dW^a dW^b - delta_ab dt)`, which has mean zero
/// given the state at the left end of the step.
fn diffusion_terms(
    sig: &[f64],
    step: Option<(&[f64], f64)>,
    grad: &[f64],
    hess: &[f64],
    d: usize,
) -> (f64, f64) {
    let nb = sig.len() / d;
    let quad = |a: usize, b: usize| -> f64 {
        let (sa, sb) = (&sig[a * d..(a + 1) * d], &sig[b * d..(b + 1) * d]);
        let mut acc = 0.0;
        for i in 0..d {
            for c in 0..d {
                acc += sa[i] * hess[i * d + c] * sb[c];
            }
        }
        acc
    };
    let drift = 0.5 * (0..nb).map(|a| quad(a, a)).sum::<f64>();
    let mut cv = 0.0;
    if let Some((w, dt)) = step {
        for a in 0..nb {
            let s = &sig[a * d..(a + 1) * d];
            cv += (0..d).map(|c| grad[c] * s[c]).sum::<f64>() * w[a];
            for b in 0..nb {
                let dd = if a == b { dt } else { 0.0 };
                cv += 0.5 * quad(a, b) * (w[a] * w[b] - dd);
            }
        }
    }
    (drift, cv)
}

/// Per particle, `J^{ak}_n = sum_{u<n} W^a_u (A^k_{u+1} - A^k_u)` at `n*nb*K + a*K + k`.
fn mixed_integrals(
    law: &ParticleLaw<'_>,
    df: &Diffusion,
    urd: &UnboundedRoughDriver,
) -> Vec<Vec<f64>> {
    let kk = urd.basis.len();
    let nb = df.n_brownian;
    let a = urd.coeff.z();
    let n_times = a.len();
    law.brownian
        .iter()
        .map(|w| {
            let mut out = vec![0.0; n_times * nb * kk];
            for n in 1..n_times {
                let da = a.increment(n - 1, n);
                let wv = w.value(n - 1);
                for q in 0..nb {
                    for k in 0..kk {
                        let idx = q * kk + k;
                        out[n * nb * kk + idx] = out[(n - 1) * nb * kk + idx] + wv[q] * da[k];
                    }
                }
            }
            out
        })
        .collect()
}

/// Batch means of `sum_{a,k} (sigma^a . grad L_k phi)(x_s) int_s^t (W^a_u - W^a_s) dA^k_u`, a
/// mean-zero control variate for the interaction of the Brownian and rough parts over `[s, t]`.
#[allow(clippy::too_many_arguments)]
fn cross_control(
    law: &ParticleLaw<'_>,
    df: &Diffusion,
    urd: &UnboundedRoughDriver,
    probes: &Basis,
    mixed: &[Vec<f64>],
    i: usize,
    j: usize,
    sizes: &[usize],
) -> Vec<f64> {
    let d = urd.basis.dim();
    let kk = urd.basis.len();
    let nb = df.n_brownian;
    let np = probes.len();
    let a_st = urd.coeff.z().increment(i, j);
    let n_part = law.paths.len();
    let mut acc = vec![0.0; BATCHES * np];
    let mut inc = vec![0.0; nb * kk];
    for (pi, path) in law.paths.iter().enumerate() {
        let x = path.value(i);
        let pj = probes.jets(x, 2);
        let bj = urd.basis.jets(x, 1);
        let sig = df.sigma_at(i, x);
        let ws = law.brownian[pi].value(i);
        let jm = &mixed[pi];
        for q in 0..nb {
            for k in 0..kk {
                let idx = q * kk + k;
                inc[idx] = jm[j * nb * kk + idx] - jm[i * nb * kk + idx] - ws[q] * a_st[k];
            }
        }
        let b = batch_of(pi, n_part);
        for p in 0..np {
            let grad = &pj.jac[p * d..(p + 1) * d];
            let hess = &pj.hess[p * d * d..(p + 1) * d * d];
            let mut v = 0.0;
            for q in 0..nb {
                let sq = &sig[q * d..(q + 1) * d];
                for k in 0..kk {
                    let mut g = 0.0;
                    for ii in 0..d {
                        let mut dl = 0.0;
                        for c in 0..d {
                            dl += bj.jac[(k * d + c) * d + ii] * grad[c]
                                + bj.val[k * d + c] * hess[ii * d + c];
                        }
                        g += sq[ii] * dl;
                    }
                    v += g * inc[q * kk + k];
                }
            }
            acc[b * np + p] += v;
        }
    }
    for b in 0..BATCHES {
        for p in 0..np {
            acc[b * np + p] /= sizes[b] as f64;
        }
    }
    acc
}

/// `nu#_st(phi) = delta nu_st(phi) - int_s^t nu_r(Tr(a_r hess phi)) dr - nu_s(B1_st phi) -
/// nu_s(B2_st phi)` on dyadic intervals, with `a = 0.5 sigma sigma^T` integrated by the trapezoid
/// rule and the Itô sums `grad phi . sigma dW` subtracted as a mean-zero control variate.
pub fn fp_defect(
    law: &ParticleLaw<'_>,
    urd: &UnboundedRoughDriver,
    probes: &ProbeSet,
    opts: &FpOptions,
) -> Result<FpDefectReport> {
    let grid = urd.grid();
    check_law(law, grid)?;
    let d = urd.basis.dim();
    if probes.basis.dim() != d || probes.basis.out_dim() != 1 {
        return Err(Error::BasisMismatch(
            "probes must be scalar functions on the particle space".into(),
        ));
    }
    let kk = urd.basis.len();
    let np = probes.len();
    let q = 3 + kk + kk * kk;
    let n_times = grid.len();
    let scale2 = opts.sigma_scale * opts.sigma_scale;
    let stats = BatchStats::collect(n_times, law.paths.len(), np, q, |n, i, out| {
        let x = law.paths[i].value(n);
        let pj = probes.basis.jets(x, 2);
        let bj = urd.basis.jets(x, 1);
        let diff = law.diffusion.map(|df| {
            let sig = df.sigma_at(n, x);
            let dw = (n + 1 < n_times).then(|| {
                (
                    law.brownian[i].increment(n, n + 1),
                    law.paths[i].grid().t(n + 1) - law.paths[i].grid().t(n),
                )
            });
            (sig, dw)
        });
        for p in 0..np {
            let o = &mut out[p * q..(p + 1) * q];
            o[0] = pj.val[p];
            if let Some((sig, dw)) = &diff {
                let (dr, mt) = diffusion_terms(
                    sig,
                    dw.as_ref().map(|(w, h)| (w.as_slice(), *h)),
                    &pj.jac[p * d..(p + 1) * d],
                    &pj.hess[p * d * d..(p + 1) * d * d],
                    d,
                );
                o[1] = scale2 * dr;
                o[2] = mt;
            }
            let (first, second) = o[3..].split_at_mut(kk);
            urd.lie_from_jets(&pj, &bj, p, first, second);
        }
    });
    // cumulative trapezoid drift and martingale per (batch, probe)
    let mut cum = vec![vec![[0.0f64; 2]; BATCHES * np]; n_times];
    for n in 1..n_times {
        let dt = grid.t(n) - grid.t(n - 1);
        for b in 0..BATCHES {
            for p in 0..np {
                let prev = cum[n - 1][b * np + p];
                let dr = 0.5 * dt * (stats.get(n - 1, b, p, 1) + stats.get(n, b, p, 1));
                cum[n][b * np + p] = [prev[0] + dr, prev[1] + stats.get(n - 1, b, p, 2)];
            }
        }
    }
    let mixed = law.diffusion.map(|df| mixed_integrals(law, df, urd));
    let mut values = Vec::new();
    let mut scales = Vec::new();
    let mut maxima = Vec::new();
    let mut noise = Vec::new();
    let steps = grid.steps();
    let mut batch_vals = vec![0.0; BATCHES];
    for &stride in &opts.strides {
        if stride == 0 || stride > steps {
            continue;
        }
        let (mut best, mut band) = (0.0f64, 0.0f64);
        let mut len = 0.0f64;
        let mut k = 0;
        while (k + 1) * stride <= steps {
            let (i, j) = (k * stride, (k + 1) * stride);
            len = len.max(grid.t(j) - grid.t(i));
            let a = urd.coeff.z().increment(i, j);
            let aa = urd.coeff.zz(i, j);
            let cross = match (&mixed, law.diffusion) {
                (Some(mx), Some(df)) => {
                    cross_control(law, df, urd, &probes.basis, mx, i, j, &stats.sizes)
                }
                _ => vec![0.0; BATCHES * np],
            };
            for p in 0..np {
                for (b, bv) in batch_vals.iter_mut().enumerate() {
                    let ci = cum[i][b * np + p];
                    let cj = cum[j][b * np + p];
                    let mut v = stats.get(j, b, p, 0) - stats.get(i, b, p, 0);
                    v -= cross[b * np + p];
                    v -= cj[0] - ci[0];
                    v -= cj[1] - ci[1];
                    for kq in 0..kk {
                        v -= a[kq] * stats.get(i, b, p, 3 + kq);
                        for l in 0..kk {
                            v -= aa[kq * kk + l] * stats.get(i, b, p, 3 + kk + l * kk + kq);
                        }
                    }
                    *bv = v;
                }
                let (mean, hw) = mean_and_band(&batch_vals, &stats.sizes);
                if mean.abs() > best || (mean.abs() == best && hw > band && best == 0.0) {
                    best = mean.abs();
                    band = hw;
                }
                values.push(FpDefectValue {
                    probe: p,
                    s: grid.t(i),
                    t: grid.t(j),
                    defect: mean,
                    ci_low: mean - hw,
                    ci_high: mean + hw,
                });
            }
            k += 1;
        }
        scales.push(len);
        maxima.push(best);
        noise.push(band);
    }
    if scales.is_empty() {
        return Err(Error::InvalidParameter(
            "no stride fits the driver grid".into(),
        ));
    }
    Ok(FpDefectReport::assemble(
        values,
        scales,
        maxima,
        noise,
        3.0 * urd.alpha() - opts.slack,
        probes.id.clone(),
        law.paths.len(),
    ))
}

/// Defect of a mean-field fixed point against the nonlocal equation whose driver is built from the
/// law itself: `X^mu = int beta(mu_r) dZ_r` and `a_t = 0.5 sigma(mu_t) sigma(mu_t)^T`.
pub fn nonlocal_fp_check(
    fixed_point: &ControlledMeasure,
    kernels: &KernelFamily,
    z: &RoughPath,
    ensemble: &Ensemble,
    probes: &ProbeSet,
    opts: &FpOptions,
) -> Result<FpDefectReport> {
    let frozen = kernels.freeze(fixed_point.measure.paths(), Some(&fixed_point.gamma))?;
    let x = build_z_beta(&frozen.beta, z)?;
    let urd = UnboundedRoughDriver::new(kernels.basis.clone(), x)?;
    let diffusion = if kernels.n_brownian > 0 {
        Some(Diffusion::new(
            kernels.basis.clone(),
            frozen.sigma,
            kernels.n_brownian,
        )?)
    } else {
        None
    };
    let law = ParticleLaw {
        paths: fixed_point.measure.paths(),
        brownian: &ensemble.brownian,
        diffusion: diffusion.as_ref(),
    };
    fp_defect(&law, &urd, probes, opts)
}

/// Residual of the average Itô formula on dyadic intervals:
/// `E phi(x_t) - E phi(x_s) - int 0.5 E[hess phi (sigma, sigma)] dr - (Y_s Z_st + Y'_s ZZ_st)`,
/// maximised over probes, where `Y^j = E[grad phi . beta^j]` and `Y'` is its Gubinelli derivative.
pub fn average_ito_residual(
    cm: &ControlledMeasure,
    ensemble: &Ensemble,
    kernels: &KernelFamily,
    z: &RoughPath,
    probes: &ProbeSet,
    strides: &[usize],
) -> Result<DefectReport> {
    let paths = cm.measure.paths();
    let grid = z.grid_arc().clone();
    let frozen = kernels.freeze(paths, Some(&cm.gamma))?;
    let diffusion = if kernels.n_brownian > 0 {
        Some(Diffusion::new(
            kernels.basis.clone(),
            frozen.sigma.clone(),
            kernels.n_brownian,
        )?)
    } else {
        None
    };
    let law = ParticleLaw {
        paths,
        brownian: &ensemble.brownian,
        diffusion: diffusion.as_ref(),
    };
    check_law(&law, &grid)?;
    let d = kernels.basis.dim();
    let (kk, m) = (kernels.basis.len(), kernels.n_rough);
    let np = probes.len();
    let q = 3 + m + m * m;
    let n_times = grid.len();
    let beta = &frozen.beta;
    let stats = BatchStats::collect(n_times, paths.len(), np, q, |n, i, out| {
        let x = paths[i].value(n);
        let pj = probes.basis.jets(x, 2);
        let bj = kernels.basis.jets(x, 1);
        let y = beta.y.value(n);
        let yp = beta.y_prime.value(n);
        // beta^j(x) at j*d + c, its Jacobian at (j*d + c)*d + a, beta'^{j,i}(x) at (j*m + i)*d + c
        let mut bv = vec![0.0; m * d];
        let mut bjac = vec![0.0; m * d * d];
        let mut bder = vec![0.0; m * m * d];
        for k in 0..kk {
            for j in 0..m {
                let c0 = y[k * m + j];
                for c in 0..d {
                    bv[j * d + c] += c0 * bj.val[k * d + c];
                    for a in 0..d {
                        bjac[(j * d + c) * d + a] += c0 * bj.jac[(k * d + c) * d + a];
                    }
                    for i in 0..m {
                        bder[(j * m + i) * d + c] += yp[(k * m + j) * m + i] * bj.val[k * d + c];
                    }
                }
            }
        }
        let diff = law.diffusion.map(|df| {
            let sig = df.sigma_at(n, x);
            let dw = (n + 1 < n_times).then(|| {
                (
                    law.brownian[i].increment(n, n + 1),
                    law.paths[i].grid().t(n + 1) - law.paths[i].grid().t(n),
                )
            });
            (sig, dw)
        });
        for p in 0..np {
            let grad = &pj.jac[p * d..(p + 1) * d];
            let hess = &pj.hess[p * d * d..(p + 1) * d * d];
            let o = &mut out[p * q..(p + 1) * q];
            o[0] = pj.val[p];
            if let Some((sig, dw)) = &diff {
                let (dr, mt) = diffusion_terms(
                    sig,
                    dw.as_ref().map(|(w, h)| (w.as_slice(), *h)),
                    grad,
                    hess,
                    d,
                );
                o[1] = dr;
                o[2] = mt;
            }
            for j in 0..m {
                let bj_ = &bv[j * d..(j + 1) * d];
                o[3 + j] = (0..d).map(|c| grad[c] * bj_[c]).sum();
                for i in 0..m {
                    let bi = &bv[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for c in 0..d {
                        for a in 0..d {
                            acc += hess[a * d + c] * bi[a] * bj_[c];
                            acc += grad[c] * bjac[(j * d + c) * d + a] * bi[a];
                        }
                        acc += grad[c] * bder[(j * m + i) * d + c];
                    }
                    o[3 + m + j * m + i] = acc;
                }
            }
        }
    });
    let total = paths.len() as f64;
    let pooled = |n: usize, p: usize, qq: usize| -> f64 {
        (0..BATCHES)
            .map(|b| stats.get(n, b, p, qq) * stats.sizes[b] as f64)
            .sum::<f64>()
            / total
    };
    let mut integrands = Vec::with_capacity(np);
    let mut cum = vec![vec![[0.0f64; 2]; n_times]; np];
    for p in 0..np {
        let mut yy = Path::zeros(grid.clone(), m);
        let mut yyp = Path::zeros(grid.clone(), m * m);
        for n in 0..n_times {
            for j in 0..m {
                yy.value_mut(n)[j] = pooled(n, p, 3 + j);
                for i in 0..m {
                    yyp.value_mut(n)[j * m + i] = pooled(n, p, 3 + m + j * m + i);
                }
            }
            if n > 0 {
                let dt = grid.t(n) - grid.t(n - 1);
                let prev = cum[p][n - 1];
                cum[p][n] = [
                    prev[0] + 0.5 * dt * (pooled(n - 1, p, 1) + pooled(n, p, 1)),
                    prev[1] + pooled(n - 1, p, 2),
                ];
            }
        }
        integrands.push(ControlledPath::new(yy, yyp, m)?);
    }
    let mut germ = [0.0];
    Ok(DefectReport::dyadic_scan(&grid, strides, |i, j| {
        (0..np)
            .map(|p| {
                integral_germ(&integrands[p], z, i, j, &mut germ);
                let v = pooled(j, p, 0)
                    - pooled(i, p, 0)
                    - (cum[p][j][0] - cum[p][i][0])
                    - (cum[p][j][1] - cum[p][i][1])
                    - germ[0];
                v.abs()
            })
            .fold(0.0, f64::max)
    }))
}
