//! Level-2 rough paths, canonical lifts and algebraic diagnostics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::defect::DefectReport;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{add_outer, norm, FnIncrements, Path, TwoParamIncrement};
use crate::variation::holder_seminorm;

/// Storage of the second level.
#[derive(Debug, Clone, PartialEq)]
enum Level2 {
    /// Every pair stored explicitly.
    Dense(TwoParamIncrement),
    /// Only `ZZ_{0,j}` is stored; other pairs follow from Chen's relation.
    Anchored(Vec<f64>),
}

/// A path `Z` in `R^m` with second-level increments `ZZ` in `R^{m x m}` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    z: Path,
    level2: Level2,
    alpha: f64,
}

impl RoughPath {
    /// Builds a rough path from explicitly given second-level values on every pair.
    pub fn from_dense(z: Path, zz: TwoParamIncrement, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let m = z.dim();
        if zz.size() != m * m {
            return Err(Error::Dimension {
                expected: m * m,
                got: zz.size(),
            });
        }
        if zz.grid() != z.grid() {
            return Err(Error::GridMismatch(
                "first and second level use different grids".into(),
            ));
        }
        Ok(Self {
            z,
            level2: Level2::Dense(zz),
            alpha,
        })
    }

    /// Assembles `ZZ` from its values on consecutive grid steps using Chen's relation.
    ///
    /// `steps` holds `ZZ_{t_k t_{k+1}}` for `k = 0..n-1`, each as `m*m` row-major entries.
    pub fn from_steps(z: Path, steps: &[f64], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let m = z.dim();
        let n = z.len();
        if steps.len() != (n - 1) * m * m {
            return Err(Error::Dimension {
                expected: (n - 1) * m * m,
                got: steps.len(),
            });
        }
        let mm = m * m;
        let mut anchors = vec![0.0; n * mm];
        let mut z0k = vec![0.0; m];
        let mut dz = vec![0.0; m];
        for k in 0..n - 1 {
            let (head, tail) = anchors.split_at_mut((k + 1) * mm);
            let next = &mut tail[..mm];
            next.copy_from_slice(&head[k * mm..]);
            for (o, s) in next.iter_mut().zip(&steps[k * mm..(k + 1) * mm]) {
                *o += s;
            }
            z.increment_into(0, k, &mut z0k);
            z.increment_into(k, k + 1, &mut dz);
            add_outer(next, &z0k, &dz, 1.0);
        }
        Ok(Self {
            z,
            level2: Level2::Anchored(anchors),
            alpha,
        })
    }

    /// Builds from anchored values `ZZ_{0,j}` directly.
    pub fn from_anchors(z: Path, anchors: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let mm = z.dim() * z.dim();
        if anchors.len() != z.len() * mm {
            return Err(Error::Dimension {
                expected: z.len() * mm,
                got: anchors.len(),
            });
        }
        Ok(Self {
            z,
            level2: Level2::Anchored(anchors),
            alpha,
        })
    }

    pub fn z(&self) -> &Path {
        &self.z
    }

    pub fn grid(&self) -> &TimeGrid {
        self.z.grid()
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        self.z.grid_arc()
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn zz(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.dim()];
        self.zz_into(i, j, &mut out);
        out
    }

    /// Writes `ZZ_{t_i t_j}` (`i <= j`) into `out`.
    pub fn zz_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let m = self.dim();
        let mm = m * m;
        if i == j {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        match &self.level2 {
            Level2::Dense(d) => out.copy_from_slice(d.get(i, j)),
            Level2::Anchored(a) => {
                for ((o, aj), ai) in out
                    .iter_mut()
                    .zip(&a[j * mm..(j + 1) * mm])
                    .zip(&a[i * mm..(i + 1) * mm])
                {
                    *o = aj - ai;
                }
                if i > 0 {
                    let z0i = self.z.increment(0, i);
                    let zij = self.z.increment(i, j);
                    add_outer(out, &z0i, &zij, -1.0);
                }
            }
        }
    }

    /// Dense copy of the second level (quadratic memory in the grid size).
    pub fn zz_dense(&self) -> TwoParamIncrement {
        let mm = self.dim() * self.dim();
        TwoParamIncrement::from_fn(self.grid_arc().clone(), mm, |i, j, out| {
            self.zz_into(i, j, out)
        })
    }

    /// Same rough path with the second level stored for every pair.
    pub fn to_dense(&self) -> Self {
        Self {
            z: self.z.clone(),
            level2: Level2::Dense(self.zz_dense()),
            alpha: self.alpha,
        }
    }

    /// Values of the second level on consecutive steps.
    pub fn step_values(&self) -> Vec<f64> {
        let mm = self.dim() * self.dim();
        let mut out = vec![0.0; (self.len() - 1) * mm];
        for (k, chunk) in out.chunks_mut(mm.max(1)).enumerate() {
            self.zz_into(k, k + 1, chunk);
        }
        out
    }

    /// Restriction to a subgrid, keeping Chen consistency.
    pub fn restrict(&self, sub: &Arc<TimeGrid>) -> Result<Self> {
        let idx = self.grid().embed(sub)?;
        let z = self.z.restrict(sub)?;
        let mm = self.dim() * self.dim();
        let mut steps = vec![0.0; (idx.len() - 1) * mm];
        for (k, w) in idx.windows(2).enumerate() {
            self.zz_into(w[0], w[1], &mut steps[k * mm..(k + 1) * mm]);
        }
        Self::from_steps(z, &steps, self.alpha)
    }

    /// The rough path on grid indices `lo..=hi`, re-based at time 0.
    pub fn window(&self, lo: usize, hi: usize) -> Result<Self> {
        let g = Arc::new(self.grid().window(lo, hi)?);
        let m = self.dim();
        let mut vals = Vec::with_capacity((hi - lo + 1) * m);
        for i in lo..=hi {
            vals.extend_from_slice(self.z.value(i));
        }
        let z = Path::new(g, m, vals)?;
        let mm = m * m;
        let mut steps = vec![0.0; (hi - lo) * mm];
        for k in lo..hi {
            self.zz_into(k, k + 1, &mut steps[(k - lo) * mm..(k - lo + 1) * mm]);
        }
        Self::from_steps(z, &steps, self.alpha)
    }

    /// `[Z]_{alpha,h}`.
    pub fn holder_z(&self, h: f64) -> Result<f64> {
        holder_seminorm(&self.z, self.alpha, h)
    }

    /// `[ZZ]_{2 alpha,h}`.
    pub fn holder_zz(&self, h: f64) -> Result<f64> {
        let inc = FnIncrements {
            grid: self.grid(),
            norm: |i, j| norm(&self.zz(i, j)),
        };
        holder_seminorm(&inc, 2.0 * self.alpha, h)
    }

    /// Returns a copy with `c (t - s) I` added to every second-level increment.
    pub fn with_bracket_shift(&self, c: f64) -> Result<Self> {
        let m = self.dim();
        let mut steps = self.step_values();
        for k in 0..self.len() - 1 {
            let dt = self.grid().t(k + 1) - self.grid().t(k);
            for a in 0..m {
                steps[k * m * m + a * m + a] += c * dt;
            }
        }
        Self::from_steps(self.z.clone(), &steps, self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "rough path exponent {alpha} outside (1/3, 1/2]"
        )));
    }
    Ok(())
}

/// Canonical lift of the piecewise-linear interpolant of `z`.
pub fn lift_smooth_path(z: &Path, alpha: f64) -> Result<RoughPath> {
    let m = z.dim();
    let mut steps = vec![0.0; (z.len() - 1) * m * m];
    let mut dz = vec![0.0; m];
    for k in 0..z.len() - 1 {
        z.increment_into(k, k + 1, &mut dz);
        add_outer(&mut steps[k * m * m..(k + 1) * m * m], &dz, &dz, 0.5);
    }
    RoughPath::from_steps(z.clone(), &steps, alpha)
}

/// Grid triples on which Chen-type identities are checked: all of them on small grids,
/// otherwise every dyadic bisection triple plus a fixed pseudo-random sample.
pub fn sample_triples(n: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    if n < 3 {
        return Vec::new();
    }
    if n <= 130 {
        let mut v = Vec::with_capacity(n * n * n / 6);
        for i in 0..n {
            for u in i + 1..n {
                for j in u + 1..n {
                    v.push((i, u, j));
                }
            }
        }
        return v;
    }
    let mut v = Vec::new();
    let mut stride = 2;
    while stride < n {
        let mut i = 0;
        while i + stride < n {
            v.push((i, i + stride / 2, i + stride));
            i += stride;
        }
        stride *= 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20_000 {
        let mut t = [
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        ];
        t.sort_unstable();
        if t[0] < t[1] && t[1] < t[2] {
            v.push((t[0], t[1], t[2]));
        }
    }
    v
}

/// Grid pairs for pairwise checks: all pairs on grids up to 1025 points, otherwise every step,
/// every pair on a strided subgrid, and the pairs from [`sample_triples`].
pub fn sample_pairs(n: usize) -> Vec<(usize, usize)> {
    if n <= 1025 {
        return (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
    }
    let stride = (n - 1).div_ceil(1024);
    let mut v: Vec<(usize, usize)> = (0..n - 1).map(|k| (k, k + 1)).collect();
    let coarse: Vec<usize> = (0..n).step_by(stride).collect();
    for (a, &i) in coarse.iter().enumerate() {
        for &j in &coarse[a + 1..] {
            v.push((i, j));
        }
    }
    v
}

/// Max over grid triples of `|ZZ_st - ZZ_su - ZZ_ut - Z_su (x) Z_ut|`.
pub fn chen_defect(rp: &RoughPath) -> DefectReport {
    let triples = sample_triples(rp.len(), 0x5eed);
    let m = rp.dim();
    let best = triples
        .par_iter()
        .map(|&(s, u, t)| {
            let mut d = rp.zz(s, t);
            let a = rp.zz(s, u);
            let b = rp.zz(u, t);
            for ((x, y), w) in d.iter_mut().zip(&a).zip(&b) {
                *x -= y + w;
            }
            add_outer(&mut d, &rp.z.increment(s, u), &rp.z.increment(u, t), -1.0);
            debug_assert_eq!(d.len(), m * m);
            (norm(&d), (s, t))
        })
        .reduce(|| (0.0, (0, 0)), |a, b| if b.0 > a.0 { b } else { a });
    let g = rp.grid();
    DefectReport::scalar(
        best.0,
        (best.0 > 0.0).then(|| (g.t(best.1 .0), g.t(best.1 .1))),
    )
}

/// Frobenius norm of `Sym(ZZ_st) - Z_st (x) Z_st / 2` at one pair.
pub fn geometricity_at(rp: &RoughPath, i: usize, j: usize) -> Vec<f64> {
    let m = rp.dim();
    let zz = rp.zz(i, j);
    let dz = rp.z.increment(i, j);
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            out[a * m + b] = 0.5 * (zz[a * m + b] + zz[b * m + a]) - 0.5 * dz[a] * dz[b];
        }
    }
    out
}

/// Max over grid pairs of the geometricity defect.
pub fn geometricity_defect(rp: &RoughPath) -> DefectReport {
    let pairs = sample_pairs(rp.len());
    let best = pairs
        .par_iter()
        .map(|&(i, j)| (norm(&geometricity_at(rp, i, j)), (i, j)))
        .reduce(|| (0.0, (0, 0)), |a, b| if b.0 > a.0 { b } else { a });
    let g = rp.grid();
    DefectReport::scalar(
        best.0,
        (best.0 > 0.0).then(|| (g.t(best.1 .0), g.t(best.1 .1))),
    )
}
