//! Controlled paths, rough integration and integral lifts.

use std::sync::Arc;

use crate::defect::{dyadic_strides, DefectReport};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{add_outer, norm, Path};
use crate::rough_path::RoughPath;
use crate::sewing::sew_on_grid;

/// A path `Y` in `R^n` together with its Gubinelli derivative `Y'` in `R^{n x m}` with respect to
/// an `m`-dimensional rough path: `delta Y_st = Y'_s Z_st + Y#_st`.
///
/// As an integrand, `n = e * m` and `Y` is read as the row-major `e x m` matrix `Y^{a,k}`; the
/// derivative entry `Y'^{a,k,l}` sits at `(a*m + k)*m + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub y: Path,
    pub y_prime: Path,
    m: usize,
}

impl ControlledPath {
    pub fn new(y: Path, y_prime: Path, m: usize) -> Result<Self> {
        if y.grid() != y_prime.grid() {
            return Err(Error::GridMismatch(
                "Y and Y' live on different grids".into(),
            ));
        }
        if y_prime.dim() != y.dim() * m {
            return Err(Error::Dimension {
                expected: y.dim() * m,
                got: y_prime.dim(),
            });
        }
        Ok(Self { y, y_prime, m })
    }

    /// `Y = f(Z)`, `Y' = Df(Z)` for a function given with its Jacobian (row-major `n x m`).
    pub fn from_function(
        z: &RoughPath,
        n: usize,
        f: impl Fn(&[f64], &mut [f64]),
        df: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let m = z.dim();
        let g = z.grid_arc().clone();
        let mut y = Path::zeros(g.clone(), n);
        let mut yp = Path::zeros(g, n * m);
        for i in 0..z.len() {
            f(z.z().value(i), y.value_mut(i));
            df(z.z().value(i), yp.value_mut(i));
        }
        Self::new(y, yp, m)
    }

    /// A path constant in time with zero derivative.
    pub fn constant(grid: Arc<TimeGrid>, value: &[f64], m: usize) -> Self {
        let n = value.len();
        let y = Path::from_fn(grid.clone(), n, |_, v| v.copy_from_slice(value));
        let yp = Path::zeros(grid, n * m);
        Self { y, y_prime: yp, m }
    }

    pub fn rough_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.y.grid()
    }

    fn check_base(&self, z: &RoughPath) -> Result<()> {
        if z.dim() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: z.dim(),
            });
        }
        if z.grid() != self.grid() {
            return Err(Error::GridMismatch(
                "controlled path and rough path grids differ".into(),
            ));
        }
        Ok(())
    }

    /// `Y#_st = delta Y_st - Y'_s Z_st`.
    pub fn remainder(&self, z: &RoughPath, i: usize, j: usize) -> Vec<f64> {
        let n = self.dim();
        let m = self.m;
        let dz = z.z().increment(i, j);
        let yp = self.y_prime.value(i);
        let mut r = self.y.increment(i, j);
        for (c, rc) in r.iter_mut().enumerate() {
            for l in 0..m {
                *rc -= yp[c * m + l] * dz[l];
            }
        }
        debug_assert_eq!(r.len(), n);
        r
    }

    /// Dyadic scan of `|Y#|` over the given strides.
    pub fn remainder_report(&self, z: &RoughPath, strides: &[usize]) -> Result<DefectReport> {
        self.check_base(z)?;
        Ok(DefectReport::dyadic_scan(self.grid(), strides, |i, j| {
            norm(&self.remainder(z, i, j))
        }))
    }

    /// Pointwise linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ControlledPath, b: f64) -> Result<Self> {
        if self.dim() != other.dim() || self.m != other.m || self.grid() != other.grid() {
            return Err(Error::GridMismatch(
                "controlled paths are not compatible".into(),
            ));
        }
        let lin = |p: &Path, q: &Path| {
            let vals = p
                .values()
                .iter()
                .zip(q.values())
                .map(|(x, y)| a * x + b * y)
                .collect();
            Path::new(p.grid_arc().clone(), p.dim(), vals)
        };
        Self::new(
            lin(&self.y, &other.y)?,
            lin(&self.y_prime, &other.y_prime)?,
            self.m,
        )
    }
}

/// Output of [`rough_integral`].
#[derive(Debug, Clone)]
pub struct RoughIntegral {
    /// `X_t = int_0^t Y dZ`.
    pub x: Path,
    /// `(X, Y)` as a controlled path.
    pub controlled: ControlledPath,
    /// `|delta X_st - g_st|` over dyadic pairs.
    pub remainder: DefectReport,
}

/// Germ `Y^{a,k}_s Z^k_st + Y'^{a,k,l}_s ZZ^{l,k}_st` written into `out`.
pub fn integral_germ(yp: &ControlledPath, z: &RoughPath, i: usize, j: usize, out: &mut [f64]) {
    let m = yp.m;
    let e = yp.dim() / m;
    let dz = z.z().increment(i, j);
    let zz = z.zz(i, j);
    let y = yp.y.value(i);
    let d = yp.y_prime.value(i);
    for (a, o) in out.iter_mut().enumerate().take(e) {
        let mut acc = 0.0;
        for k in 0..m {
            acc += y[a * m + k] * dz[k];
            for l in 0..m {
                acc += d[(a * m + k) * m + l] * zz[l * m + k];
            }
        }
        *o = acc;
    }
}

/// `int Y dZ` by sewing the controlled germ over the grid.
pub fn rough_integral(yp: &ControlledPath, z: &RoughPath) -> Result<RoughIntegral> {
    yp.check_base(z)?;
    let m = yp.m;
    if yp.dim() % m != 0 {
        return Err(Error::Dimension {
            expected: m * (yp.dim() / m).max(1),
            got: yp.dim(),
        });
    }
    let e = yp.dim() / m;
    let res = sew_on_grid(e, z.grid_arc(), |i, j, out| integral_germ(yp, z, i, j, out))?;
    let controlled = ControlledPath::new(res.integral.clone(), yp.y.clone(), m)?;
    Ok(RoughIntegral {
        x: res.integral,
        controlled,
        remainder: res.remainder_report,
    })
}

/// Lifts `X = int Y dZ` to a rough path `(X, XX)` with `XX_st = int_s^t X_sr (x) dX_r`.
///
/// On each step the second level is `Y^{.,l} (x) Y^{.,k} ZZ^{l,k}` with its symmetric part
/// replaced by half the square of the step increment whenever the input step is geometric, so that
/// geometric inputs give exactly geometric outputs on the grid; the adjustment is of third order.
pub fn integral_lift(yp: &ControlledPath, z: &RoughPath) -> Result<RoughPath> {
    let ri = rough_integral(yp, z)?;
    let m = yp.m;
    let e = yp.dim() / m;
    let n = z.len();
    let mut steps = vec![0.0; (n - 1) * e * e];
    let mut yz = vec![0.0; e];
    let mut xs = vec![0.0; e];
    for k in 0..n - 1 {
        let out = &mut steps[k * e * e..(k + 1) * e * e];
        let y = yp.y.value(k);
        let dz = z.z().increment(k, k + 1);
        let zz = z.zz(k, k + 1);
        for a in 0..e {
            for b in 0..e {
                let mut acc = 0.0;
                for l in 0..m {
                    for q in 0..m {
                        acc += y[a * m + l] * y[b * m + q] * zz[l * m + q];
                    }
                }
                out[a * e + b] = acc;
            }
        }
        for a in 0..e {
            yz[a] = (0..m).map(|q| y[a * m + q] * dz[q]).sum();
        }
        ri.x.increment_into(k, k + 1, &mut xs);
        add_outer(out, &xs, &xs, 0.5);
        add_outer(out, &yz, &yz, -0.5);
    }
    RoughPath::from_steps(ri.x, &steps, z.alpha())
}

/// Strides `2, 4, ..., 2^levels` used for remainder scans by default.
pub fn default_strides(levels: u32) -> Vec<usize> {
    dyadic_strides(1, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough_path::lift_smooth_path;

    fn smooth_1d(n: usize, f: impl Fn(f64) -> f64) -> RoughPath {
        let g = Arc::new(TimeGrid::uniform(1.0, n).unwrap());
        lift_smooth_path(&Path::from_fn(g, 1, |t, v| v[0] = f(t)), 0.45).unwrap()
    }

    #[test]
    fn identity_integrand_returns_increments() {
        let z = smooth_1d(32, |t| (2.0 * t).sin());
        let yp = ControlledPath::constant(z.grid_arc().clone(), &[1.0], 1);
        let ri = rough_integral(&yp, &z).unwrap();
        for i in 0..33 {
            assert!((ri.x.value(i)[0] - z.z().increment(0, i)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn z_dz_is_half_square() {
        let z = smooth_1d(64, |t| t);
        let yp =
            ControlledPath::from_function(&z, 1, |x, o| o[0] = x[0], |_, o| o[0] = 1.0).unwrap();
        let ri = rough_integral(&yp, &z).unwrap();
        assert!((ri.x.value(64)[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn index_convention_on_nonsymmetric_example() {
        let g = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
        let zp = Path::from_fn(g, 2, |t, v| {
            v[0] = t;
            v[1] = t * t;
        });
        let z = lift_smooth_path(&zp, 0.45).unwrap();
        // Y = Z^1 as an integrand against dZ^2 only: int Z^1 dZ^2 = int t * 2t dt = 2/3.
        let yp = ControlledPath::from_function(
            &z,
            2,
            |x, o| {
                o[0] = 0.0;
                o[1] = x[0];
            },
            |_, o| {
                o.iter_mut().for_each(|v| *v = 0.0);
                o[2] = 1.0;
            },
        )
        .unwrap();
        let ri = rough_integral(&yp, &z).unwrap();
        assert!((ri.x.value(256)[0] - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn zero_path_lifts_to_zero() {
        let z = smooth_1d(16, |t| t.cos());
        let yp = ControlledPath::constant(z.grid_arc().clone(), &[0.0, 0.0], 1);
        let lift = integral_lift(&yp, &z).unwrap();
        assert!(lift.zz(0, 16).iter().all(|v| *v == 0.0));
    }
}
