//! Nonlinear rough drivers `(F, FF)` on a finite field basis.
//!
//! A driver is stored as a rough path `(A, AA)` of basis coefficients:
//! `F_st(x) = sum_k A^k_st phi_k(x)` and
//! `FF_st(x, y) = sum_{k,l} AA^{kl}_st (phi_k(x) . grad) phi_l(y)`.
//! Chen's relation for `(A, AA)` is then exactly the driver Chen relation
//! `delta FF_sut(x, y) = F_su(x) . grad F_ut(y)`.

use std::sync::Arc;

use crate::defect::DefectReport;
use crate::error::{Error, Result};
use crate::field::{Basis, Lattice, SmoothField};
use crate::grid::TimeGrid;
use crate::path::{norm, Path};
use crate::rough_path::RoughPath;
use crate::variation::{greedy_partition_grid, ControlFn};

/// A rough driver on a shared basis of vector fields `R^d -> R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughDriver {
    basis: Arc<Basis>,
    coeff: RoughPath,
    alpha: f64,
    kappa: [f64; 2],
}

/// Per-atom constants turning coefficient norms into field-norm bounds.
fn kappas(basis: &Basis) -> [f64; 2] {
    let norms = basis.standard_norms();
    let n3: Vec<f64> = norms
        .iter()
        .map(|n| n.iter().copied().fold(0.0, f64::max))
        .collect();
    let n2: Vec<f64> = norms.iter().map(|n| n[0].max(n[1]).max(n[2])).collect();
    let k1 = n3.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lead = 4.0 * basis.dim() as f64;
    let k2 = n2
        .iter()
        .flat_map(|a| n3.iter().map(move |b| (lead * a * b).powi(2)))
        .sum::<f64>()
        .sqrt();
    [k1, k2]
}

impl RoughDriver {
    /// Wraps a coefficient rough path; its dimension must equal the number of atoms.
    pub fn new(basis: Arc<Basis>, coeff: RoughPath) -> Result<Self> {
        if basis.out_dim() != basis.dim() {
            return Err(Error::BasisMismatch(
                "driver fields must map R^d to R^d".into(),
            ));
        }
        if coeff.dim() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "coefficient path has {} components for {} atoms",
                coeff.dim(),
                basis.len()
            )));
        }
        let alpha = coeff.alpha();
        let kappa = kappas(&basis);
        Ok(Self {
            basis,
            coeff,
            alpha,
            kappa,
        })
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

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        self.coeff.grid_arc()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }

    /// Constants `(k1, k2)` with `|F_st|_{C^3} <= k1 |A_st|` and `|FF_st|_{C^2} <= k2 |AA_st|`.
    pub fn norm_constants(&self) -> [f64; 2] {
        self.kappa
    }

    /// First level `F_{t_i t_j}` as a field.
    pub fn first(&self, i: usize, j: usize) -> SmoothField {
        SmoothField {
            basis: self.basis.clone(),
            coeffs: self.coeff.z().increment(i, j),
        }
    }

    /// `F_{t_i t_j}(x)`.
    pub fn eval_first(&self, i: usize, j: usize, x: &[f64]) -> Vec<f64> {
        self.basis.combine(&self.coeff.z().increment(i, j), x)
    }

    /// `FF_{t_i t_j}(x, y) = sum AA^{kl} (phi_k(x) . grad) phi_l(y)`.
    pub fn eval_second(&self, i: usize, j: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
        let aa = self.coeff.zz(i, j);
        two_point(&self.basis, &aa, x, y)
    }

    /// One Davie increment `F_st(x) + FF_st(x, x)` between grid indices.
    pub fn davie_increment(&self, i: usize, j: usize, x: &[f64]) -> Vec<f64> {
        let a = self.coeff.z().increment(i, j);
        let aa = self.coeff.zz(i, j);
        davie_increment_coeffs(&self.basis, &a, &aa, x)
    }

    /// Greedy-compatible values `w(lo, j)`, `j = lo..=hi`, of the coefficient-bound control
    /// `w = k1^p [[A]]_p^p + k2^{p/2} [[AA]]_{p/2}^{p/2}`.
    pub fn control_row(&self, lo: usize, hi: usize) -> Vec<f64> {
        let p = self.p();
        let q = p / 2.0;
        let [k1, k2] = self.kappa;
        let len = hi - lo + 1;
        let mut v1 = vec![0.0; len];
        let mut v2 = vec![0.0; len];
        let mut out = vec![0.0; len];
        let kk = self.basis.len();
        let mut aa = vec![0.0; kk * kk];
        for j in lo + 1..=hi {
            let (mut b1, mut b2): (f64, f64) = (0.0, 0.0);
            for i in lo..j {
                let a = norm(&self.coeff.z().increment(i, j)) * k1;
                self.coeff.zz_into(i, j, &mut aa);
                let s = norm(&aa) * k2;
                b1 = b1.max(v1[i - lo] + a.powf(p));
                b2 = b2.max(v2[i - lo] + s.powf(q));
            }
            v1[j - lo] = b1;
            v2[j - lo] = b2;
            out[j - lo] = b1 + b2;
        }
        out
    }

    /// `w_F(t_i, t_j)`.
    pub fn control(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            return 0.0;
        }
        *self.control_row(i, j).last().unwrap_or(&0.0)
    }

    /// The control as a [`ControlFn`] with times snapped to the grid.
    pub fn control_fn(self: &Arc<Self>) -> ControlFn {
        let d = self.clone();
        ControlFn::explicit(move |s, t| {
            let g = d.grid();
            d.control(g.floor_index(s), g.floor_index(t))
        })
    }

    /// `N_beta(w_F, [0, T])` and the partition indices.
    pub fn accumulation(&self, beta: f64) -> Result<(Vec<usize>, usize)> {
        greedy_partition_grid(self.len(), beta, |lo, hi| self.control_row(lo, hi))
    }

    /// Coefficient-bound Hölder seminorms `([F]_{alpha,h}, [FF]_{2 alpha,h})`.
    pub fn holder_bounds(&self, h: f64) -> (f64, f64) {
        let g = self.grid();
        let [k1, k2] = self.kappa;
        let mut f: f64 = 0.0;
        let mut ff: f64 = 0.0;
        let kk = self.basis.len();
        let mut aa = vec![0.0; kk * kk];
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let dt = g.t(j) - g.t(i);
                if dt > h * (1.0 + 1e-12) {
                    break;
                }
                f = f.max(k1 * norm(&self.coeff.z().increment(i, j)) / dt.powf(self.alpha));
                self.coeff.zz_into(i, j, &mut aa);
                ff = ff.max(k2 * norm(&aa) / dt.powf(2.0 * self.alpha));
            }
        }
        (f, ff)
    }

    /// The same first level with the second level set to zero.
    pub fn without_second_level(&self) -> Result<Self> {
        let kk = self.basis.len();
        let zeros = crate::path::TwoParamIncrement::zeros(self.grid_arc().clone(), kk * kk);
        let coeff = RoughPath::from_dense(self.coeff.z().clone(), zeros, self.alpha)?;
        Self::new(self.basis.clone(), coeff)
    }
}

/// `sum AA^{kl} (phi_k(x) . grad) phi_l(y)`.
pub fn two_point(basis: &Basis, aa: &[f64], x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = basis.dim();
    let kk = basis.len();
    let jx = basis.jets(x, 0);
    let jy = basis.jets(y, 1);
    let mut v = vec![0.0; kk * d];
    for k in 0..kk {
        for l in 0..kk {
            let c = aa[k * kk + l];
            if c == 0.0 {
                continue;
            }
            for i in 0..d {
                v[l * d + i] += c * jx.val[k * d + i];
            }
        }
    }
    let mut out = vec![0.0; d];
    for l in 0..kk {
        for (j, o) in out.iter_mut().enumerate() {
            for i in 0..d {
                *o += v[l * d + i] * jy.jac[(l * d + j) * d + i];
            }
        }
    }
    out
}

/// `sum A^k phi_k(x) + sum AA^{kl} (phi_k(x) . grad) phi_l(x)`.
pub fn davie_increment_coeffs(basis: &Basis, a: &[f64], aa: &[f64], x: &[f64]) -> Vec<f64> {
    let d = basis.dim();
    let kk = basis.len();
    let j = basis.jets(x, 1);
    let mut out = vec![0.0; d];
    let mut v = vec![0.0; kk * d];
    for k in 0..kk {
        for c in 0..d {
            out[c] += a[k] * j.val[k * d + c];
        }
        for l in 0..kk {
            let w = aa[k * kk + l];
            if w == 0.0 {
                continue;
            }
            for i in 0..d {
                v[l * d + i] += w * j.val[k * d + i];
            }
        }
    }
    for l in 0..kk {
        for (c, o) in out.iter_mut().enumerate() {
            for i in 0..d {
                *o += v[l * d + i] * j.jac[(l * d + c) * d + i];
            }
        }
    }
    out
}

/// Driver `F = X`, `FF = grad_2 (x) XX` from a rough path of basis coefficients.
pub fn driver_from_rough_path(x: &RoughPath, basis: Arc<Basis>) -> Result<RoughDriver> {
    RoughDriver::new(basis, x.clone())
}

/// Driver of `dx = f_t(x) dt` for `f_t = sum_k a^k(t) phi_k`, `a` piecewise linear in time.
///
/// `F_st = int_s^t f_r dr`, `FF_st(x) = int_s^t grad f_r(x) F_sr(x) dr`, both exact.
pub fn driver_from_quadrature(a: &Path, basis: Arc<Basis>, alpha: f64) -> Result<RoughDriver> {
    let kk = basis.len();
    if a.dim() != kk {
        return Err(Error::BasisMismatch(format!(
            "{} coefficients for {} atoms",
            a.dim(),
            kk
        )));
    }
    let grid = a.grid_arc().clone();
    let n = grid.len();
    let mut vals = vec![0.0; n * kk];
    let mut steps = vec![0.0; (n - 1) * kk * kk];
    for s in 0..n - 1 {
        let h = grid.t(s + 1) - grid.t(s);
        let a0 = a.value(s);
        let a1 = a.value(s + 1);
        let dlt: Vec<f64> = a1.iter().zip(a0).map(|(x, y)| x - y).collect();
        for k in 0..kk {
            vals[(s + 1) * kk + k] = vals[s * kk + k] + h * (a0[k] + 0.5 * dlt[k]);
        }
        let out = &mut steps[s * kk * kk..(s + 1) * kk * kk];
        for k in 0..kk {
            for l in 0..kk {
                out[k * kk + l] = h
                    * h
                    * (a0[k] * a0[l] / 2.0
                        + a0[k] * dlt[l] / 3.0
                        + dlt[k] * a0[l] / 6.0
                        + dlt[k] * dlt[l] / 8.0);
            }
        }
    }
    let path = Path::new(grid, kk, vals)?;
    RoughDriver::new(basis, RoughPath::from_steps(path, &steps, alpha)?)
}

/// A sample point for driver Chen checks: grid indices `s < u < t` and spatial points `x, y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChenSample {
    pub s: usize,
    pub u: usize,
    pub t: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Max over samples of `|delta FF_sut(x,y) - F_su(x) . grad F_ut(y)|`, with the right-hand side
/// evaluated from the fields directly.
pub fn driver_chen_defect(d: &RoughDriver, samples: &[ChenSample]) -> DefectReport {
    let g = d.grid();
    let dim = d.dim();
    let mut best = (0.0, None);
    for sm in samples {
        let mut lhs = d.eval_second(sm.s, sm.t, &sm.x, &sm.y);
        let a = d.eval_second(sm.s, sm.u, &sm.x, &sm.y);
        let b = d.eval_second(sm.u, sm.t, &sm.x, &sm.y);
        let fsu = d.eval_first(sm.s, sm.u, &sm.x);
        let jac = d.first(sm.u, sm.t).jacobian(&sm.y);
        for c in 0..dim {
            let rhs: f64 = (0..dim).map(|i| fsu[i] * jac[c * dim + i]).sum();
            lhs[c] -= a[c] + b[c] + rhs;
        }
        let v = norm(&lhs);
        if v > best.0 {
            best = (v, Some((g.t(sm.s), g.t(sm.t))));
        }
    }
    DefectReport::scalar(best.0, best.1)
}

/// Default sample set: index triples from [`crate::rough_path::sample_triples`] (capped) with
/// points on a small spatial lattice.
pub fn default_chen_samples(d: &RoughDriver, max_triples: usize) -> Vec<ChenSample> {
    let triples = crate::rough_path::sample_triples(d.len(), 0xc4e7);
    let stride = (triples.len() / max_triples.max(1)).max(1);
    let pts = Lattice::new(d.dim(), 5, 2.0);
    let p = pts.points();
    triples
        .iter()
        .step_by(stride)
        .enumerate()
        .map(|(n, &(s, u, t))| ChenSample {
            s,
            u,
            t,
            x: p[n % p.len()].clone(),
            y: p[(n * 7 + 3) % p.len()].clone(),
        })
        .collect()
}

/// Both terms of the driver metric, their combination, and coefficient upper bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverDistance {
    /// `[F - G]_{alpha,h}` in the lattice `C^3` norm.
    pub first: f64,
    /// `[FF - GG]_{2 alpha,h}` in the lattice `C^2` norm of the diagonal field.
    pub second: f64,
    /// `first + sqrt(second)`.
    pub metric: f64,
    /// Coefficient bounds for `first` and `second`.
    pub first_bound: f64,
    pub second_bound: f64,
}

/// Distance between two drivers on a shared basis and grid.
pub fn driver_distance(
    a: &RoughDriver,
    b: &RoughDriver,
    alpha: f64,
    h: f64,
) -> Result<DriverDistance> {
    driver_distance_on(a, b, alpha, h, &Lattice::standard(a.dim()))
}

/// [`driver_distance`] with an explicit probe lattice.
pub fn driver_distance_on(
    a: &RoughDriver,
    b: &RoughDriver,
    alpha: f64,
    h: f64,
    lattice: &Lattice,
) -> Result<DriverDistance> {
    if a.basis != b.basis {
        return Err(Error::BasisMismatch("drivers use different bases".into()));
    }
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("drivers use different grids".into()));
    }
    let basis = &a.basis;
    let jets: Vec<_> = lattice.points().iter().map(|x| basis.jets(x, 3)).collect();
    let g = a.grid();
    let n = a.len();
    let kk = basis.len();
    let [k1, k2] = a.kappa;
    let (mut first, mut second, mut fb, mut sb): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut aa = vec![0.0; kk * kk];
    let mut bb = vec![0.0; kk * kk];
    let slack = 1e-12 * g.horizon();
    for i in 0..n {
        for j in i + 1..n {
            let dt = g.t(j) - g.t(i);
            if dt > h + slack {
                break;
            }
            let da: Vec<f64> = a
                .coeff
                .z()
                .increment(i, j)
                .iter()
                .zip(b.coeff.z().increment(i, j))
                .map(|(x, y)| x - y)
                .collect();
            a.coeff.zz_into(i, j, &mut aa);
            b.coeff.zz_into(i, j, &mut bb);
            let dd: Vec<f64> = aa.iter().zip(&bb).map(|(x, y)| x - y).collect();
            let f_norm = jets
                .iter()
                .map(|jt| first_level_cb3(basis, jt, &da))
                .fold(0.0, f64::max);
            let s_norm = jets
                .iter()
                .map(|jt| second_level_cb2(basis, jt, &dd))
                .fold(0.0, f64::max);
            first = first.max(f_norm / dt.powf(alpha));
            second = second.max(s_norm / dt.powf(2.0 * alpha));
            fb = fb.max(k1 * norm(&da) / dt.powf(alpha));
            sb = sb.max(k2 * norm(&dd) / dt.powf(2.0 * alpha));
        }
    }
    Ok(DriverDistance {
        first,
        second,
        metric: first + second.sqrt(),
        first_bound: fb,
        second_bound: sb,
    })
}

fn first_level_cb3(basis: &Basis, j: &crate::field::BasisJets, c: &[f64]) -> f64 {
    let d = basis.dim();
    let blocks: [(&[f64], usize); 4] = [
        (&j.val, d),
        (&j.jac, d * d),
        (&j.hess, d * d * d),
        (&j.third, d * d * d * d),
    ];
    let mut best: f64 = 0.0;
    for (b, sz) in blocks {
        let mut acc = vec![0.0; sz];
        for (k, ck) in c.iter().enumerate() {
            for (x, v) in acc.iter_mut().zip(&b[k * sz..(k + 1) * sz]) {
                *x += ck * v;
            }
        }
        best = best.max(norm(&acc));
    }
    best
}

/// `C^2` norm at one point of `x -> sum AA^{kl} phi_k^i(x) d_i phi_l(x)`.
fn second_level_cb2(basis: &Basis, j: &crate::field::BasisJets, aa: &[f64]) -> f64 {
    let d = basis.dim();
    let kk = basis.len();
    let mut val = vec![0.0; d];
    let mut grad = vec![0.0; d * d];
    let mut hess = vec![0.0; d * d * d];
    let f = |k: usize, i: usize| j.val[k * d + i];
    let df = |k: usize, i: usize, a: usize| j.jac[(k * d + i) * d + a];
    let d2f = |k: usize, i: usize, a: usize, b: usize| j.hess[((k * d + i) * d + a) * d + b];
    let d3f = |k: usize, i: usize, a: usize, b: usize, c: usize| {
        j.third[(((k * d + i) * d + a) * d + b) * d + c]
    };
    for k in 0..kk {
        for l in 0..kk {
            let w = aa[k * kk + l];
            if w == 0.0 {
                continue;
            }
            for c in 0..d {
                for i in 0..d {
                    val[c] += w * f(k, i) * df(l, c, i);
                    for a in 0..d {
                        grad[c * d + a] +=
                            w * (df(k, i, a) * df(l, c, i) + f(k, i) * d2f(l, c, i, a));
                        for b in 0..d {
                            hess[(c * d + a) * d + b] += w
                                * (d2f(k, i, a, b) * df(l, c, i)
                                    + df(k, i, a) * d2f(l, c, i, b)
                                    + df(k, i, b) * d2f(l, c, i, a)
                                    + f(k, i) * d3f(l, c, i, a, b));
                        }
                    }
                }
            }
        }
    }
    norm(&val).max(norm(&grad)).max(norm(&hess))
}
