//! Hölder seminorms, p-variation, controls and greedy partitions.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path::Increments;

/// Local Hölder seminorm: sup of `|g_st| / |t-s|^alpha` over grid pairs with `t - s <= h`.
pub fn holder_seminorm<G: Increments + Sync + ?Sized>(g: &G, alpha: f64, h: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hölder exponent {alpha} outside (0, 1]"
        )));
    }
    let grid = g.grid();
    if grid.len() < 2 {
        return Err(Error::DegenerateGrid(
            "grid has fewer than two points".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window h = {h} must be positive"
        )));
    }
    let n = grid.len();
    let slack = 1e-12 * grid.horizon();
    let best = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let ti = grid.t(i);
            let mut m: f64 = 0.0;
            for j in i + 1..n {
                let dt = grid.t(j) - ti;
                if dt > h + slack {
                    break;
                }
                m = m.max(g.pair_norm(i, j) / dt.powf(alpha));
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// `p`-variation of `g` over grid-subordinate partitions of `[lo, hi]` (grid indices).
pub fn p_variation<G: Increments + ?Sized>(g: &G, p: f64, lo: usize, hi: usize) -> Result<f64> {
    check_p(p)?;
    let row = pvar_row(g, p, lo, hi)?;
    Ok(row[hi - lo].powf(1.0 / p))
}

/// Values `[[g]]_{p,[lo,j]}^p` for `j = lo..=hi`, via dynamic programming.
pub fn pvar_row<G: Increments + ?Sized>(g: &G, p: f64, lo: usize, hi: usize) -> Result<Vec<f64>> {
    check_p(p)?;
    if hi >= g.grid().len() || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "interval [{lo}, {hi}] outside grid"
        )));
    }
    let mut v = vec![0.0; hi - lo + 1];
    for j in lo + 1..=hi {
        let mut best: f64 = 0.0;
        for i in lo..j {
            best = best.max(v[i - lo] + g.pair_norm(i, j).powf(p));
        }
        v[j - lo] = best;
    }
    Ok(v)
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p-variation needs p >= 1, got {p}"
        )));
    }
    Ok(())
}

/// How a control function was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    FromPVariation,
    FromHolder,
    Explicit,
}

type Evaluator = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A superadditive two-parameter function `w(s, t) >= 0` with `w(s, s) = 0`.
#[derive(Clone)]
pub struct ControlFn {
    pub kind: ControlKind,
    eval: Arc<Evaluator>,
}

impl std::fmt::Debug for ControlFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlFn")
            .field("kind", &self.kind)
            .finish()
    }
}

impl ControlFn {
    pub fn explicit(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ControlKind::Explicit,
            eval: Arc::new(f),
        }
    }

    /// `w(s,t) = [g]_alpha^{1/alpha} (t - s)`.
    pub fn from_holder(seminorm: f64, alpha: f64) -> Self {
        let c = seminorm.powf(1.0 / alpha);
        Self {
            kind: ControlKind::FromHolder,
            eval: Arc::new(move |s, t| c * (t - s).max(0.0)),
        }
    }

    /// `w(s,t) = [[g]]_{p,[s,t]}^p`, with `s` and `t` snapped to the enclosing grid indices.
    pub fn from_p_variation<G: Increments + Send + Sync + 'static>(
        g: Arc<G>,
        p: f64,
    ) -> Result<Self> {
        check_p(p)?;
        let eval = move |s: f64, t: f64| {
            let grid = g.grid();
            let i = grid.floor_index(s);
            let j = grid.floor_index(t);
            if j <= i {
                return 0.0;
            }
            pvar_row(&*g, p, i, j).map(|r| r[j - i]).unwrap_or(f64::NAN)
        };
        Ok(Self {
            kind: ControlKind::FromPVariation,
            eval: Arc::new(eval),
        })
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        if t <= s {
            0.0
        } else {
            (self.eval)(s, t)
        }
    }

    /// Largest violation of `w(s,u) + w(u,t) <= w(s,t)` over the given triples.
    pub fn superadditivity_violation(&self, triples: &[(f64, f64, f64)]) -> f64 {
        triples
            .iter()
            .map(|&(s, u, t)| {
                let lhs = self.eval(s, u) + self.eval(u, t);
                let rhs = self.eval(s, t);
                (lhs - rhs) / rhs.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Outcome of a greedy partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPartition {
    /// `tau_0 = s < tau_1 < ... = t`.
    pub times: Vec<f64>,
    /// `sup { n : tau_n < t }`.
    pub n_beta: usize,
    /// Worst relative superadditivity violation seen on sampled triples (0 if none).
    pub superadditivity_violation: f64,
}

/// Greedy partition of `[s, t]` consuming `beta` units of `w` per interval, located by bisection.
pub fn greedy_partition(w: &ControlFn, beta: f64, s: f64, t: f64) -> Result<GreedyPartition> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold beta = {beta} must be positive"
        )));
    }
    if !(t > s) {
        return Err(Error::InvalidParameter(format!(
            "empty interval [{s}, {t}]"
        )));
    }
    let tol = 1e-10 * t.abs().max(t - s);
    let mut times = vec![s];
    let mut tau = s;
    let mut triples = Vec::new();
    while tau < t {
        if w.eval(tau, t) < beta {
            times.push(t);
            break;
        }
        let (mut lo, mut hi) = (tau, t);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if w.eval(tau, mid) >= beta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi <= tau {
            hi = (tau + tol).min(t);
        }
        triples.push((tau, 0.5 * (tau + hi), hi));
        times.push(hi);
        tau = hi;
        if times.len() > 10_000_000 {
            return Err(Error::InvalidParameter(
                "greedy partition did not terminate".into(),
            ));
        }
    }
    let n_beta = times.iter().filter(|&&x| x < t).count() - 1;
    let violation = w.superadditivity_violation(&triples);
    Ok(GreedyPartition {
        times,
        n_beta,
        superadditivity_violation: violation,
    })
}

/// Grid version: each `tau_{n+1}` is the first grid index where `w(tau_n, .) >= beta`.
///
/// `row(lo, hi)` must return `w(lo, j)` for `j = lo..=hi`; rows are requested over doubling
/// horizons, so each entry may only depend on `lo` and `j`.
pub fn greedy_partition_grid(
    n_points: usize,
    beta: f64,
    mut row: impl FnMut(usize, usize) -> Vec<f64>,
) -> Result<(Vec<usize>, usize)> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold beta = {beta} must be positive"
        )));
    }
    let last = n_points - 1;
    let mut taus = vec![0usize];
    let mut tau = 0;
    let mut span = 16usize;
    while tau < last {
        loop {
            let hi = (tau + span).min(last);
            let r = row(tau, hi);
            match r.iter().skip(1).position(|&v| v >= beta) {
                Some(k) => {
                    tau += k + 1;
                    span = (2 * (k + 1)).max(16);
                    break;
                }
                None if hi == last => {
                    tau = last;
                    break;
                }
                None => span *= 2,
            }
        }
        taus.push(tau);
    }
    let n = taus.iter().filter(|&&i| i < last).count() - 1;
    Ok((taus, n))
}
