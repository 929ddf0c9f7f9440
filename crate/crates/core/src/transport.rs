//! Wasserstein distances between uniform empirical measures.

use crate::error::{Error, Result};
use crate::path::{euclid_dist, Path};

/// Method used to compute a transport distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMethod {
    /// Monotone matching of sorted samples (one dimension).
    Sorted,
    /// Exact optimal assignment.
    Assignment,
    /// Entropic approximation; carries the primal-dual gap of the transport cost.
    Sinkhorn { entropic_gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wasserstein {
    pub value: f64,
    pub method: TransportMethod,
}

/// Largest sample count solved by exact assignment.
pub const ASSIGNMENT_LIMIT: usize = 256;

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Wasserstein order rho = {rho} must be at least 1"
        )));
    }
    Ok(())
}

/// `W_rho` between the point clouds `a` and `b` in `R^d` (flattened, uniform weights).
pub fn wasserstein(a: &[f64], b: &[f64], dim: usize, rho: f64) -> Result<Wasserstein> {
    check_rho(rho)?;
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 || a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "point clouds must be nonempty with a whole number of points".into(),
        ));
    }
    if dim == 1 {
        return Ok(Wasserstein {
            value: sorted_1d(a, b, rho),
            method: TransportMethod::Sorted,
        });
    }
    let pa: Vec<&[f64]> = a.chunks(dim).collect();
    let pb: Vec<&[f64]> = b.chunks(dim).collect();
    from_cost(pa.len(), pb.len(), rho, |i, j| euclid_dist(pa[i], pb[j]))
}

/// Path-space metric used by [`wasserstein_paths`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathMetric {
    Sup,
    /// `|x_0 - y_0| + [x - y]_alpha` over all grid pairs.
    Holder(f64),
}

fn path_distance(x: &Path, y: &Path, metric: PathMetric) -> f64 {
    match metric {
        PathMetric::Sup => x.sup_distance(y),
        PathMetric::Holder(alpha) => {
            let g = x.grid();
            let d = x.dim();
            let mut best: f64 = 0.0;
            let mut dx = vec![0.0; d];
            let mut dy = vec![0.0; d];
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    x.increment_into(i, j, &mut dx);
                    y.increment_into(i, j, &mut dy);
                    best = best.max(euclid_dist(&dx, &dy) / (g.t(j) - g.t(i)).powf(alpha));
                }
            }
            euclid_dist(x.value(0), y.value(0)) + best
        }
    }
}

/// `W_rho` between empirical measures on path space.
pub fn wasserstein_paths(
    a: &[Path],
    b: &[Path],
    rho: f64,
    metric: PathMetric,
) -> Result<Wasserstein> {
    check_rho(rho)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("empty path measure".into()));
    }
    from_cost(a.len(), b.len(), rho, |i, j| {
        path_distance(&a[i], &b[j], metric)
    })
}

fn from_cost(
    na: usize,
    nb: usize,
    rho: f64,
    dist: impl Fn(usize, usize) -> f64,
) -> Result<Wasserstein> {
    let mut cost = vec![0.0; na * nb];
    for i in 0..na {
        for j in 0..nb {
            cost[i * nb + j] = dist(i, j).powf(rho);
        }
    }
    if na == nb && na <= ASSIGNMENT_LIMIT {
        let (rows, cols) = lsap::solve(na, nb, &cost, false)
            .map_err(|e| Error::InvalidParameter(format!("assignment failed: {e:?}")))?;
        let total: f64 = rows
            .iter()
            .zip(&cols)
            .map(|(&i, &j)| cost[i * nb + j])
            .sum();
        return Ok(Wasserstein {
            value: (total / na as f64).powf(1.0 / rho),
            method: TransportMethod::Assignment,
        });
    }
    let (primal, dual) = sinkhorn(&cost, na, nb);
    Ok(Wasserstein {
        value: primal.max(0.0).powf(1.0 / rho),
        method: TransportMethod::Sinkhorn {
            entropic_gap: (primal - dual).abs(),
        },
    })
}

/// Exact one-dimensional `W_rho` via quantile functions (handles unequal sample counts).
pub fn sorted_1d(a: &[f64], b: &[f64], rho: f64) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    if x.len() == y.len() {
        let s: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs().powf(rho)).sum();
        return (s / x.len() as f64).powf(1.0 / rho);
    }
    let (wa, wb) = (1.0 / x.len() as f64, 1.0 / y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wa, wb);
    let mut total = 0.0;
    while i < x.len() && j < y.len() {
        let m = ra.min(rb);
        total += m * (x[i] - y[j]).abs().powf(rho);
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            ra = wa;
        }
        if rb <= 1e-15 {
            j += 1;
            rb = wb;
        }
    }
    total.powf(1.0 / rho)
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn with uniform marginals; returns `(<P, C>, dual objective)`.
fn sinkhorn(cost: &[f64], na: usize, nb: usize) -> (f64, f64) {
    let scale = cost
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = 1e-3 * scale;
    let (la, lb) = (-(na as f64).ln(), -(nb as f64).ln());
    let mut f = vec![0.0; na];
    let mut g = vec![0.0; nb];
    for _ in 0..5000 {
        for i in 0..na {
            f[i] = -eps * log_sum_exp((0..nb).map(|j| (g[j] - cost[i * nb + j]) / eps + lb));
        }
        let mut err: f64 = 0.0;
        for j in 0..nb {
            let old = g[j];
            g[j] = -eps * log_sum_exp((0..na).map(|i| (f[i] - cost[i * nb + j]) / eps + la));
            err = err.max((g[j] - old).abs());
        }
        if err < 1e-10 * scale {
            break;
        }
    }
    let mut primal = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let p = ((f[i] + g[j] - cost[i * nb + j]) / eps + la + lb).exp();
            primal += p * cost[i * nb + j];
        }
    }
    let dual = f.iter().sum::<f64>() / na as f64 + g.iter().sum::<f64>() / nb as f64;
    (primal, dual)
}
