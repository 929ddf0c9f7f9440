//! Rough differential equations `dx = F(dt, x)` driven by a [`RoughDriver`].

use std::sync::Arc;

use crate::controlled::{integral_lift, ControlledPath};
use crate::defect::{dyadic_strides, DefectReport};
use crate::driver::{driver_distance, driver_from_rough_path, DriverDistance, RoughDriver};
use crate::error::{Error, Result};
use crate::field::{Basis, SmoothField};
use crate::grid::TimeGrid;
use crate::path::{norm, Path, TwoParamIncrement};
use crate::rough_path::RoughPath;
use crate::variation::greedy_partition_grid;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Steps must satisfy `C w_F(s,t)^{1/p} <= 1/2`.
    pub admission_c: f64,
    /// Also solve on the twice coarser grid and report the sup-norm difference.
    pub richardson: bool,
    /// Record the greedy partition of `w_F` at the admission threshold over `[0, T]`.
    pub record_partition: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            admission_c: 8.0,
            richardson: false,
            record_partition: false,
        }
    }
}

impl SolverOptions {
    /// Threshold `beta` with `C beta^{1/p} = 1/2`.
    pub fn admission_beta(&self, p: f64) -> f64 {
        (0.5 / self.admission_c).powf(p)
    }
}

/// A computed solution together with the driver it solves.
#[derive(Debug, Clone)]
pub struct RdeSolution {
    pub x: Path,
    pub driver: Arc<RoughDriver>,
    /// Driver-grid index of each solution grid point.
    pub grid_index: Vec<usize>,
    /// Driver-grid indices actually stepped through, after refinement.
    pub steps_used: Vec<usize>,
    /// Greedy partition of `w_F` at the admission threshold, when requested.
    pub partition: Option<(Vec<usize>, usize)>,
    /// `sup |x^h - x^{2h}|` over the coarse points, when requested.
    pub richardson: Option<f64>,
}

impl RdeSolution {
    /// `x#_st = delta x_st - F_st(x_s)` between solution grid indices.
    pub fn sharp(&self, i: usize, j: usize) -> Vec<f64> {
        let (a, b) = (self.grid_index[i], self.grid_index[j]);
        let f = self.driver.eval_first(a, b, self.x.value(i));
        let mut r = self.x.increment(i, j);
        r.iter_mut().zip(&f).for_each(|(r, f)| *r -= f);
        r
    }

    /// `x_natural_st = x#_st - FF_st(x_s)`.
    pub fn natural(&self, i: usize, j: usize) -> Vec<f64> {
        let (a, b) = (self.grid_index[i], self.grid_index[j]);
        let xs = self.x.value(i);
        let inc = self.driver.davie_increment(a, b, xs);
        let mut r = self.x.increment(i, j);
        r.iter_mut().zip(&inc).for_each(|(r, f)| *r -= f);
        r
    }

    pub fn sharp_dense(&self) -> TwoParamIncrement {
        TwoParamIncrement::from_fn(self.x.grid_arc().clone(), self.x.dim(), |i, j, o| {
            o.copy_from_slice(&self.sharp(i, j))
        })
    }

    pub fn natural_dense(&self) -> TwoParamIncrement {
        TwoParamIncrement::from_fn(self.x.grid_arc().clone(), self.x.dim(), |i, j, o| {
            o.copy_from_slice(&self.natural(i, j))
        })
    }

    /// Dyadic scans of `|x#|` over strides `1..=32` and of `|x_natural|` over strides `2..=64`
    /// (single steps vanish by construction). The a priori bounds only hold below some interval
    /// length, so the scans stay at the six finest levels the grid allows.
    pub fn remainder_reports(&self) -> (DefectReport, DefectReport) {
        let g = self.x.grid();
        let top = ((g.steps() as f64).log2().floor() as u32).max(2);
        let sharp = DefectReport::dyadic_scan(g, &dyadic_strides(0, 5.min(top - 2)), |i, j| {
            norm(&self.sharp(i, j))
        });
        let natural = DefectReport::dyadic_scan(g, &dyadic_strides(1, 6.min(top - 1)), |i, j| {
            norm(&self.natural(i, j))
        });
        (sharp, natural)
    }

    /// `[x]_{alpha,h} / [F]_{alpha,h}` with the driver seminorm in coefficient-bound form.
    pub fn local_bound_constant(&self, h: f64) -> Result<f64> {
        let alpha = self.driver.alpha();
        let xs = crate::variation::holder_seminorm(&self.x, alpha, h)?;
        let (f, _) = self.driver.holder_bounds(h);
        Ok(if f > 0.0 { xs / f } else { 0.0 })
    }
}

/// Splits `[a, b]` (driver indices) until every piece is admissible.
fn admit(
    d: &RoughDriver,
    a: usize,
    b: usize,
    beta: f64,
    c: f64,
    out: &mut Vec<usize>,
) -> Result<()> {
    let w = d.control(a, b);
    if w <= beta {
        out.push(b);
        return Ok(());
    }
    if b - a == 1 {
        let g = d.grid();
        return Err(Error::DriverTooRough {
            s: g.t(a),
            t: g.t(b),
            measured: c * w.powf(1.0 / d.p()),
        });
    }
    let mid = a + (b - a) / 2;
    admit(d, a, mid, beta, c, out)?;
    admit(d, mid, b, beta, c, out)
}

fn working_steps(d: &RoughDriver, idx: &[usize], opts: &SolverOptions) -> Result<Vec<usize>> {
    let beta = opts.admission_beta(d.p());
    let mut pts = vec![idx[0]];
    for w in idx.windows(2) {
        admit(d, w[0], w[1], beta, opts.admission_c, &mut pts)?;
    }
    Ok(pts)
}

fn check_start(d: &RoughDriver, xi: &[f64]) -> Result<()> {
    if xi.len() != d.dim() {
        return Err(Error::Dimension {
            expected: d.dim(),
            got: xi.len(),
        });
    }
    Ok(())
}

/// Davie scheme `x_{t+} = x_t + F_{t t+}(x_t) + FF_{t t+}(x_t)` on `grid`, which must be a subgrid
/// of the driver grid. Steps violating the admission rule are bisected along the driver grid.
pub fn solve_davie(d: &Arc<RoughDriver>, xi: &[f64], grid: &Arc<TimeGrid>) -> Result<RdeSolution> {
    solve_davie_with(d, xi, grid, &SolverOptions::default())
}

pub fn solve_davie_with(
    d: &Arc<RoughDriver>,
    xi: &[f64],
    grid: &Arc<TimeGrid>,
    opts: &SolverOptions,
) -> Result<RdeSolution> {
    check_start(d, xi)?;
    let idx = d.grid().embed(grid)?;
    let steps = working_steps(d, &idx, opts)?;
    let dim = d.dim();
    let mut x = Path::zeros(grid.clone(), dim);
    x.value_mut(0).copy_from_slice(xi);
    let mut cur = xi.to_vec();
    let mut next_out = 1;
    for w in steps.windows(2) {
        let inc = d.davie_increment(w[0], w[1], &cur);
        cur.iter_mut().zip(&inc).for_each(|(c, v)| *c += v);
        if next_out < idx.len() && idx[next_out] == w[1] {
            x.value_mut(next_out).copy_from_slice(&cur);
            next_out += 1;
        }
    }
    let partition = if opts.record_partition {
        Some(greedy_partition_grid(
            d.len(),
            opts.admission_beta(d.p()),
            |lo, hi| d.control_row(lo, hi),
        )?)
    } else {
        None
    };
    let richardson = if opts.richardson && grid.steps() % 2 == 0 && grid.steps() >= 2 {
        let coarse = Arc::new(grid.coarsen(2)?);
        let inner = SolverOptions {
            richardson: false,
            record_partition: false,
            ..*opts
        };
        let c = solve_davie_with(d, xi, &coarse, &inner)?;
        let mut gap: f64 = 0.0;
        for k in 0..coarse.len() {
            let a = x.value(2 * k);
            gap = gap.max(crate::path::euclid_dist(a, c.x.value(k)));
        }
        Some(gap)
    } else {
        None
    };
    Ok(RdeSolution {
        x,
        driver: d.clone(),
        grid_index: idx,
        steps_used: steps,
        partition,
        richardson,
    })
}

/// Picard iteration record: window boundaries (driver indices) and per-window gap sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    pub windows: Vec<(usize, usize)>,
    pub gaps: Vec<Vec<f64>>,
}

impl PicardTrace {
    /// Largest number of iterations used on any window.
    pub fn max_iterations(&self) -> usize {
        self.gaps.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Ratios of consecutive nonzero gaps, over all windows.
    pub fn ratios(&self) -> Vec<f64> {
        self.gaps
            .iter()
            .flat_map(|g| {
                g.windows(2)
                    .filter(|w| w[0] > 0.0 && w[1] > 0.0)
                    .map(|w| w[1] / w[0])
            })
            .collect()
    }
}

/// Picard iteration `delta x^{n+1} = F(x^n) + FF(x^{n-1}, x^n) + remainder` on windows of the
/// driver control, with `x^0` constant. The two-point second level takes the earlier iterate in
/// the slot carrying the field and the later iterate in the slot carrying the gradient.
pub fn solve_picard(
    d: &Arc<RoughDriver>,
    xi: &[f64],
    grid: &Arc<TimeGrid>,
    max_iters: usize,
    tol: f64,
) -> Result<(RdeSolution, PicardTrace)> {
    solve_picard_with(d, xi, grid, max_iters, tol, 1.0, &SolverOptions::default())
}

pub fn solve_picard_with(
    d: &Arc<RoughDriver>,
    xi: &[f64],
    grid: &Arc<TimeGrid>,
    max_iters: usize,
    tol: f64,
    window_beta: f64,
    opts: &SolverOptions,
) -> Result<(RdeSolution, PicardTrace)> {
    check_start(d, xi)?;
    let idx = d.grid().embed(grid)?;
    let steps = working_steps(d, &idx, opts)?;
    let (cuts, _) = greedy_partition_grid(d.len(), window_beta, |lo, hi| d.control_row(lo, hi))?;
    let mut bounds = vec![0usize];
    for c in cuts.iter().skip(1) {
        let pos = steps.partition_point(|&s| s < *c).min(steps.len() - 1);
        if pos > *bounds.last().unwrap_or(&0) {
            bounds.push(pos);
        }
    }
    if *bounds.last().unwrap_or(&0) != steps.len() - 1 {
        bounds.push(steps.len() - 1);
    }
    let dim = d.dim();
    let mut full = vec![0.0; steps.len() * dim];
    full[..dim].copy_from_slice(xi);
    let mut trace = PicardTrace {
        windows: Vec::new(),
        gaps: Vec::new(),
    };
    for b in bounds.windows(2) {
        let (lo, hi) = (b[0], b[1]);
        let start = full[lo * dim..(lo + 1) * dim].to_vec();
        let m = hi - lo + 1;
        let mut prev: Vec<f64> = start.iter().copied().cycle().take(m * dim).collect();
        let mut cur = prev.clone();
        let mut gaps = Vec::new();
        loop {
            let mut next = vec![0.0; m * dim];
            next[..dim].copy_from_slice(&start);
            for k in 0..m - 1 {
                let (a, bb) = (steps[lo + k], steps[lo + k + 1]);
                let xn = &cur[k * dim..(k + 1) * dim];
                let xo = &prev[k * dim..(k + 1) * dim];
                let f = d.eval_first(a, bb, xn);
                let ff = d.eval_second(a, bb, xo, xn);
                for c in 0..dim {
                    next[(k + 1) * dim + c] = next[k * dim + c] + f[c] + ff[c];
                }
            }
            let gap = next
                .chunks(dim)
                .zip(cur.chunks(dim))
                .map(|(a, b)| crate::path::euclid_dist(a, b))
                .fold(0.0, f64::max);
            gaps.push(gap);
            prev = std::mem::replace(&mut cur, next);
            if gap <= tol {
                break;
            }
            if gaps.len() >= max_iters {
                return Err(Error::NoConvergence {
                    iters: gaps.len(),
                    gaps,
                });
            }
        }
        full[lo * dim..(hi + 1) * dim].copy_from_slice(&cur);
        trace.windows.push((steps[lo], steps[hi]));
        trace.gaps.push(gaps);
    }
    let mut x = Path::zeros(grid.clone(), dim);
    let mut k = 0;
    for (n, &s) in steps.iter().enumerate() {
        if k < idx.len() && idx[k] == s {
            x.value_mut(k)
                .copy_from_slice(&full[n * dim..(n + 1) * dim]);
            k += 1;
        }
    }
    let sol = RdeSolution {
        x,
        driver: d.clone(),
        grid_index: idx,
        steps_used: steps,
        partition: None,
        richardson: None,
    };
    Ok((sol, trace))
}

/// Output of [`stability_gap`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub sup_gap: f64,
    pub initial_gap: f64,
    /// Driver distance when both drivers share a basis and grid.
    pub distance: Option<DriverDistance>,
    /// `sup_gap / (initial_gap + distance.metric)`.
    pub ratio: f64,
    /// `N_1(w_F, [0, T])` for the first driver.
    pub accumulation: usize,
}

/// Solves with both drivers and reports the gap against the stability bound's ingredients.
pub fn stability_gap(
    da: &Arc<RoughDriver>,
    db: &Arc<RoughDriver>,
    xi_a: &[f64],
    xi_b: &[f64],
    grid: &Arc<TimeGrid>,
) -> Result<StabilityReport> {
    let a = solve_davie(da, xi_a, grid)?;
    let b = solve_davie(db, xi_b, grid)?;
    let sup_gap = a.x.sup_distance(&b.x);
    let initial_gap = crate::path::euclid_dist(xi_a, xi_b);
    let distance = driver_distance(da, db, da.alpha(), da.grid().horizon()).ok();
    let denom = initial_gap + distance.map_or(0.0, |d| d.metric);
    let ratio = if denom > 0.0 { sup_gap / denom } else { 0.0 };
    let (_, accumulation) = da.accumulation(1.0)?;
    Ok(StabilityReport {
        sup_gap,
        initial_gap,
        distance,
        ratio,
        accumulation,
    })
}

/// Compares the driver route for `dx = beta(x) dZ` with a classical Euler-Milstein scheme built
/// from direct field evaluations. `beta.y` holds time-constant coefficients `b^{k,j}` (atom `k`,
/// noise `j`) with zero Gubinelli derivative. Returns the sup-norm gap on `grid`.
pub fn classical_consistency(
    beta: &ControlledPath,
    basis: &Arc<Basis>,
    z: &RoughPath,
    xi: &[f64],
    grid: &Arc<TimeGrid>,
) -> Result<f64> {
    let m = z.dim();
    let kk = basis.len();
    if beta.dim() != kk * m {
        return Err(Error::Dimension {
            expected: kk * m,
            got: beta.dim(),
        });
    }
    let b0 = beta.y.value(0).to_vec();
    let constant = (0..beta.y.len()).all(|i| beta.y.value(i) == b0.as_slice())
        && beta.y_prime.values().iter().all(|v| *v == 0.0);
    if !constant {
        return Err(Error::InvalidParameter(
            "classical comparison needs a time-independent field".into(),
        ));
    }
    let lift = integral_lift(beta, z)?;
    let driver = Arc::new(driver_from_rough_path(&lift, basis.clone())?);
    let opts = SolverOptions {
        admission_c: 0.0,
        ..SolverOptions::default()
    };
    let route = solve_davie_with(&driver, xi, grid, &opts)?;

    let fields: Vec<SmoothField> = (0..m)
        .map(|j| SmoothField::new(basis.clone(), (0..kk).map(|k| b0[k * m + j]).collect()))
        .collect::<Result<_>>()?;
    let zc = z.restrict(grid)?;
    let dim = basis.dim();
    let mut x = xi.to_vec();
    let mut gap = crate::path::euclid_dist(&x, route.x.value(0));
    for s in 0..grid.steps() {
        let dz = zc.z().increment(s, s + 1);
        let zz = zc.zz(s, s + 1);
        let vals: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(&x)).collect();
        let jacs: Vec<Vec<f64>> = fields.iter().map(|f| f.jacobian(&x)).collect();
        let mut next = x.clone();
        for j in 0..m {
            for c in 0..dim {
                next[c] += vals[j][c] * dz[j];
            }
        }
        for l in 0..m {
            for j in 0..m {
                let w = zz[l * m + j];
                for c in 0..dim {
                    let dir: f64 = (0..dim).map(|i| jacs[j][c * dim + i] * vals[l][i]).sum();
                    next[c] += dir * w;
                }
            }
        }
        x = next;
        gap = gap.max(crate::path::euclid_dist(&x, route.x.value(s + 1)));
    }
    Ok(gap)
}

/// Classical RK4 for `dx = sum_j b_j(x) dz^j` along the piecewise-linear interpolation of `z`,
/// with `substeps` stages per grid step.
pub fn rk4_along_path(
    fields: &[SmoothField],
    z: &Path,
    xi: &[f64],
    substeps: usize,
) -> Result<Path> {
    if fields.len() != z.dim() {
        return Err(Error::Dimension {
            expected: z.dim(),
            got: fields.len(),
        });
    }
    let dim = xi.len();
    let mut out = Path::zeros(z.grid_arc().clone(), dim);
    out.value_mut(0).copy_from_slice(xi);
    let mut x = xi.to_vec();
    let rhs = |y: &[f64], v: &[f64]| -> Vec<f64> {
        let mut o = vec![0.0; dim];
        for (f, vj) in fields.iter().zip(v) {
            for (oc, fc) in o.iter_mut().zip(f.eval(y)) {
                *oc += fc * vj;
            }
        }
        o
    };
    for s in 0..z.len() - 1 {
        let v: Vec<f64> = z
            .increment(s, s + 1)
            .iter()
            .map(|d| d / substeps as f64)
            .collect();
        for _ in 0..substeps {
            let k1 = rhs(&x, &v);
            let y2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * k).collect();
            let k2 = rhs(&y2, &v);
            let y3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * k).collect();
            let k3 = rhs(&y3, &v);
            let y4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + k).collect();
            let k4 = rhs(&y4, &v);
            for c in 0..dim {
                x[c] += (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0;
            }
        }
        out.value_mut(s + 1).copy_from_slice(&x);
    }
    Ok(out)
}
