//! Smooth fields on a finite basis of Gaussian atoms, with analytic derivatives to third order.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One basis element `x -> v * psi(x)` with scalar profile
/// `psi(x) = exp(-|x-c|^2 / (2 w^2))`, or `((x-c).u) exp(...)` when a ramp direction `u` is set.
/// An infinite width removes the Gaussian factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub center: Vec<f64>,
    pub width: f64,
    pub direction: Vec<f64>,
    pub ramp: Option<Vec<f64>>,
}

/// Derivatives of a scalar function at a point; `hess` and `third` are dense row-major tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub third: Vec<f64>,
}

impl Atom {
    pub fn bump(center: Vec<f64>, width: f64, direction: Vec<f64>) -> Self {
        Self {
            center,
            width,
            direction,
            ramp: None,
        }
    }

    pub fn ramp(center: Vec<f64>, width: f64, direction: Vec<f64>, ramp: Vec<f64>) -> Self {
        Self {
            center,
            width,
            direction,
            ramp: Some(ramp),
        }
    }

    /// The constant field equal to `direction` everywhere.
    pub fn constant(dim: usize, direction: Vec<f64>) -> Self {
        Self {
            center: vec![0.0; dim],
            width: f64::INFINITY,
            direction,
            ramp: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Scalar profile and its derivatives up to `order` (at most 3).
    pub fn profile_jet(&self, x: &[f64], order: usize) -> Jet {
        let mut jet = Jet {
            value: 0.0,
            grad: Vec::new(),
            hess: Vec::new(),
            third: Vec::new(),
        };
        self.profile_jet_into(x, order, &mut jet);
        jet
    }

    /// Profile value only.
    pub fn profile_value(&self, x: &[f64]) -> f64 {
        let (mut r2, mut uy) = (0.0, 0.0);
        for (i, (a, c)) in x.iter().zip(&self.center).enumerate() {
            let y = a - c;
            r2 += y * y;
            if let Some(u) = &self.ramp {
                uy += u[i] * y;
            }
        }
        let g = if self.width.is_finite() {
            (-0.5 * r2 / (self.width * self.width)).exp()
        } else {
            1.0
        };
        if self.ramp.is_some() {
            uy * g
        } else {
            g
        }
    }

    /// [`Atom::profile_jet`] written into reusable buffers.
    pub fn profile_jet_into(&self, x: &[f64], order: usize, jet: &mut Jet) {
        let d = self.dim();
        let inv = if self.width.is_finite() {
            1.0 / (self.width * self.width)
        } else {
            0.0
        };
        let y = |i: usize| x[i] - self.center[i];
        let r2: f64 = (0..d).map(|i| y(i) * y(i)).sum();
        let g = (-0.5 * inv * r2).exp();
        jet.grad.clear();
        jet.hess.clear();
        jet.third.clear();
        if order >= 1 {
            jet.grad.extend((0..d).map(|i| -inv * y(i) * g));
        }
        if order >= 2 {
            for i in 0..d {
                for j in 0..d {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    jet.hess.push((inv * inv * y(i) * y(j) - inv * dij) * g);
                }
            }
        }
        if order >= 3 {
            let del = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let cubic = -inv * inv * inv * y(i) * y(j) * y(k);
                        let lin =
                            inv * inv * (del(i, j) * y(k) + del(i, k) * y(j) + del(j, k) * y(i));
                        jet.third.push((cubic + lin) * g);
                    }
                }
            }
        }
        let Some(u) = &self.ramp else {
            jet.value = g;
            return;
        };
        // product rule for ((x-c).u) * gaussian, highest order first so lower orders stay intact
        let uy: f64 = (0..d).map(|i| u[i] * y(i)).sum();
        if order >= 3 {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let idx = (i * d + j) * d + k;
                        jet.third[idx] = u[i] * jet.hess[j * d + k]
                            + u[j] * jet.hess[i * d + k]
                            + u[k] * jet.hess[i * d + j]
                            + uy * jet.third[idx];
                    }
                }
            }
        }
        if order >= 2 {
            for i in 0..d {
                for j in i..d {
                    let v = u[i] * jet.grad[j] + u[j] * jet.grad[i];
                    jet.hess[i * d + j] = v + uy * jet.hess[i * d + j];
                    if j != i {
                        jet.hess[j * d + i] = v + uy * jet.hess[j * d + i];
                    }
                }
            }
        }
        if order >= 1 {
            for i in 0..d {
                jet.grad[i] = u[i] * g + uy * jet.grad[i];
            }
        }
        jet.value = uy * g;
    }
}

/// A finite family of atoms sharing state dimension `dim` and output dimension `out_dim`.
#[derive(Debug, Clone)]
pub struct Basis {
    dim: usize,
    out_dim: usize,
    atoms: Vec<Atom>,
    standard_norms: OnceLock<Vec<[f64; 4]>>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.out_dim == other.out_dim && self.atoms == other.atoms
    }
}

/// Values and derivatives of every atom at one point. Layouts: `val[k*o + j]`,
/// `jac[(k*o + j)*d + i] = d_i phi_k^j`, `hess[((k*o + j)*d + a)*d + b]`, and likewise `third`.
#[derive(Debug, Clone)]
pub struct BasisJets {
    pub val: Vec<f64>,
    pub jac: Vec<f64>,
    pub hess: Vec<f64>,
    pub third: Vec<f64>,
}

impl Basis {
    pub fn new(dim: usize, out_dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 || out_dim == 0 {
            return Err(Error::InvalidParameter(
                "basis dimensions must be positive".into(),
            ));
        }
        for (k, a) in atoms.iter().enumerate() {
            let ramp_ok = a.ramp.as_ref().is_none_or(|u| u.len() == dim);
            if a.center.len() != dim || a.direction.len() != out_dim || !ramp_ok {
                return Err(Error::BasisMismatch(format!(
                    "atom {k} has inconsistent dimensions"
                )));
            }
            if !(a.width > 0.0) {
                return Err(Error::BasisMismatch(format!(
                    "atom {k} has non-positive width {}",
                    a.width
                )));
            }
        }
        Ok(Self {
            dim,
            out_dim,
            atoms,
            standard_norms: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Atom values `phi_k^j(x)` into `out[k*o + j]`.
    pub fn values_into(&self, x: &[f64], out: &mut [f64]) {
        let o = self.out_dim;
        for (k, a) in self.atoms.iter().enumerate() {
            let p = a.profile_value(x);
            for j in 0..o {
                out[k * o + j] = a.direction[j] * p;
            }
        }
    }

    /// All atom jets up to `order` at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> BasisJets {
        let (d, o, kk) = (self.dim, self.out_dim, self.atoms.len());
        let mut j = BasisJets {
            val: vec![0.0; kk * o],
            jac: vec![0.0; if order >= 1 { kk * o * d } else { 0 }],
            hess: vec![0.0; if order >= 2 { kk * o * d * d } else { 0 }],
            third: vec![0.0; if order >= 3 { kk * o * d * d * d } else { 0 }],
        };
        let mut p = Jet {
            value: 0.0,
            grad: Vec::with_capacity(d),
            hess: Vec::with_capacity(d * d),
            third: Vec::new(),
        };
        for (k, a) in self.atoms.iter().enumerate() {
            a.profile_jet_into(x, order, &mut p);
            for c in 0..o {
                let v = a.direction[c];
                let kc = k * o + c;
                j.val[kc] = v * p.value;
                if order >= 1 {
                    for i in 0..d {
                        j.jac[kc * d + i] = v * p.grad[i];
                    }
                }
                if order >= 2 {
                    for i in 0..d * d {
                        j.hess[kc * d * d + i] = v * p.hess[i];
                    }
                }
                if order >= 3 {
                    for i in 0..d * d * d {
                        j.third[kc * d * d * d + i] = v * p.third[i];
                    }
                }
            }
        }
        j
    }

    /// `sum_k c_k phi_k(x)`.
    pub fn combine(&self, coeffs: &[f64], x: &[f64]) -> Vec<f64> {
        let o = self.out_dim;
        let mut out = vec![0.0; o];
        for (k, a) in self.atoms.iter().enumerate() {
            if coeffs[k] == 0.0 {
                continue;
            }
            let p = a.profile_value(x) * coeffs[k];
            for j in 0..o {
                out[j] += a.direction[j] * p;
            }
        }
        out
    }

    /// Lattice estimates of `sup |D^r phi_k|` for `r = 0..=3`, per atom.
    /// [`Basis::atom_sup_norms`] on [`Lattice::standard`], computed once.
    pub fn standard_norms(&self) -> &[[f64; 4]] {
        self.standard_norms
            .get_or_init(|| self.atom_sup_norms(&Lattice::standard(self.dim)))
    }

    pub fn atom_sup_norms(&self, lattice: &Lattice) -> Vec<[f64; 4]> {
        let (d, o) = (self.dim, self.out_dim);
        let mut out = vec![[0.0f64; 4]; self.len()];
        for x in lattice.points() {
            let j = self.jets(x, 3);
            for (k, n) in out.iter_mut().enumerate() {
                let blocks = [
                    &j.val[k * o..(k + 1) * o],
                    &j.jac[k * o * d..(k + 1) * o * d],
                    &j.hess[k * o * d * d..(k + 1) * o * d * d],
                    &j.third[k * o * d * d * d..(k + 1) * o * d * d * d],
                ];
                for (r, b) in blocks.iter().enumerate() {
                    n[r] = n[r].max(crate::path::norm(b));
                }
            }
        }
        out
    }
}

/// A field `sum_k c_k phi_k` on a shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    pub basis: Arc<Basis>,
    pub coeffs: Vec<f64>,
}

impl SmoothField {
    pub fn new(basis: Arc<Basis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficients for a basis of {} atoms",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.basis.combine(&self.coeffs, x)
    }

    /// Jacobian `d_i f^j` as row-major `o x d`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let (d, o) = (self.basis.dim(), self.basis.out_dim());
        let j = self.basis.jets(x, 1);
        let mut out = vec![0.0; o * d];
        for (k, c) in self.coeffs.iter().enumerate() {
            for (r, v) in out.iter_mut().enumerate() {
                *v += c * j.jac[k * o * d + r];
            }
        }
        out
    }

    /// Lattice estimate of `max_{r <= order} sup_x |D^r f(x)|`.
    pub fn cb_norm(&self, order: usize, lattice: &Lattice) -> f64 {
        cb_norm_coeffs(&self.basis, &self.coeffs, order, lattice)
    }

    /// Upper bound `sum_k |c_k| max_{r<=3} sup |D^r phi_k|` from per-atom norms.
    pub fn coefficient_bound(&self, atom_norms: &[[f64; 4]]) -> f64 {
        self.coeffs
            .iter()
            .zip(atom_norms)
            .map(|(c, n)| c.abs() * n.iter().copied().fold(0.0, f64::max))
            .sum()
    }

    /// `sum_k c_k^2 (1 + w_k^{-2})^order`.
    pub fn sobolev_proxy(&self, order: i32) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.atoms())
            .map(|(c, a)| {
                let inv = if a.width.is_finite() {
                    1.0 / (a.width * a.width)
                } else {
                    0.0
                };
                c * c * (1.0 + inv).powi(order)
            })
            .sum()
    }
}

/// `max_{r <= order} sup_lattice |D^r (sum_k c_k phi_k)|`.
pub fn cb_norm_coeffs(basis: &Basis, coeffs: &[f64], order: usize, lattice: &Lattice) -> f64 {
    let (d, o) = (basis.dim(), basis.out_dim());
    let sizes = [o, o * d, o * d * d, o * d * d * d];
    let mut best: f64 = 0.0;
    for x in lattice.points() {
        let j = basis.jets(x, order);
        let blocks = [&j.val, &j.jac, &j.hess, &j.third];
        for r in 0..=order.min(3) {
            let sz = sizes[r];
            let mut acc = vec![0.0; sz];
            for (k, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(&blocks[r][k * sz..(k + 1) * sz]) {
                    *a += c * v;
                }
            }
            best = best.max(crate::path::norm(&acc));
        }
    }
    best
}

/// Spatial probe points for sup-norm estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl Lattice {
    /// `per_axis^d` equispaced points on `[-half, half]^d` for `d <= 2`; otherwise
    /// `per_axis^2` uniform random points in the same box (fixed seed).
    pub fn new(dim: usize, per_axis: usize, half: f64) -> Self {
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| -half + 2.0 * half * i as f64 / (per_axis.max(2) - 1) as f64)
            .collect();
        let points = match dim {
            1 => axis.iter().map(|&a| vec![a]).collect(),
            2 => axis
                .iter()
                .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
                .collect(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x1a77_1ce5);
                (0..per_axis * per_axis)
                    .map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect())
                    .collect()
            }
        };
        Self { dim, points }
    }

    /// Default probe lattice: 41 points per axis on `[-5, 5]^d`.
    pub fn standard(dim: usize) -> Self {
        Self::new(dim, 41, 5.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}
