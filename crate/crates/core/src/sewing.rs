//! The sewing operator: from coherent local germs to additive integrals.

use std::sync::Arc;

use crate::defect::{dyadic_strides, DefectReport};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{norm, Path, TwoParamIncrement};

/// A two-parameter germ `g_st` in `R^dim`, evaluable at arbitrary times.
pub struct Germ<'a> {
    pub dim: usize,
    /// Exponent the germ is expected to satisfy `|delta g_sut| <~ |t-s|^zeta` with.
    pub claimed_zeta: f64,
    eval: Box<dyn Fn(f64, f64, &mut [f64]) + Sync + 'a>,
}

impl<'a> Germ<'a> {
    pub fn new(
        dim: usize,
        claimed_zeta: f64,
        eval: impl Fn(f64, f64, &mut [f64]) + Sync + 'a,
    ) -> Self {
        Self {
            dim,
            claimed_zeta,
            eval: Box::new(eval),
        }
    }

    pub fn eval(&self, s: f64, t: f64, out: &mut [f64]) {
        (self.eval)(s, t, out)
    }
}

/// Result of sewing a germ on a grid.
#[derive(Debug, Clone)]
pub struct SewResult {
    /// `I(g)_t` with `I(g)_0 = 0`.
    pub integral: Path,
    /// `I(g)_st - g_st` on every pair of the coarse grid, kept when the grid has at most 1025 points.
    pub natural_remainder: Option<TwoParamIncrement>,
    /// Remainder maxima over dyadic pairs of the coarse grid.
    pub remainder_report: DefectReport,
    pub fitted_zeta: f64,
}

/// Neumaier-compensated accumulator for vectors.
#[derive(Debug, Clone)]
pub struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, v: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(v) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.comp)
            .map(|(s, c)| s + c)
            .collect()
    }
}

/// Sews `g` over `grid`, refining each interval `2^refine_levels` times.
pub fn sew(g: &Germ<'_>, grid: &Arc<TimeGrid>, refine_levels: u32) -> Result<SewResult> {
    if refine_levels > 24 {
        return Err(Error::InvalidParameter(format!(
            "refine_levels = {refine_levels} is too large"
        )));
    }
    let d = g.dim;
    let sub = 1usize << refine_levels;
    let mut buf = vec![0.0; d];
    let eval = |s: f64, t: f64, out: &mut [f64]| -> Result<()> {
        g.eval(s, t, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGerm { s, t });
        }
        Ok(())
    };
    let mut running = CompensatedSum::new(d);
    let mut values = vec![0.0; grid.len() * d];
    for k in 0..grid.steps() {
        let (a, b) = (grid.t(k), grid.t(k + 1));
        let h = (b - a) / sub as f64;
        for q in 0..sub {
            let s = a + q as f64 * h;
            let t = if q + 1 == sub {
                b
            } else {
                a + (q + 1) as f64 * h
            };
            eval(s, t, &mut buf)?;
            running.add(&buf);
        }
        values[(k + 1) * d..(k + 2) * d].copy_from_slice(&running.value());
    }
    let integral = Path::new(grid.clone(), d, values)?;
    finish(integral, grid, |s, t, out| eval(s, t, out))
}

/// Sews a germ known only at grid indices: the integral is the running sum of `g` over steps.
pub fn sew_on_grid(
    dim: usize,
    grid: &Arc<TimeGrid>,
    mut germ: impl FnMut(usize, usize, &mut [f64]),
) -> Result<SewResult> {
    let mut buf = vec![0.0; dim];
    let mut running = CompensatedSum::new(dim);
    let mut values = vec![0.0; grid.len() * dim];
    for k in 0..grid.steps() {
        germ(k, k + 1, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGerm {
                s: grid.t(k),
                t: grid.t(k + 1),
            });
        }
        running.add(&buf);
        values[(k + 1) * dim..(k + 2) * dim].copy_from_slice(&running.value());
    }
    let integral = Path::new(grid.clone(), dim, values)?;
    let report = remainder_scan(&integral, |i, j, out| germ(i, j, out));
    let fitted_zeta = report.slope;
    Ok(SewResult {
        integral,
        natural_remainder: None,
        remainder_report: report,
        fitted_zeta,
    })
}

fn finish(
    integral: Path,
    grid: &Arc<TimeGrid>,
    mut eval: impl FnMut(f64, f64, &mut [f64]) -> Result<()>,
) -> Result<SewResult> {
    let d = integral.dim();
    let mut err = None;
    let natural_remainder = if grid.len() <= 1025 {
        let r = TwoParamIncrement::from_fn(grid.clone(), d, |i, j, out| {
            if let Err(e) = eval(grid.t(i), grid.t(j), out) {
                err.get_or_insert(e);
            }
            for (o, (b, a)) in out
                .iter_mut()
                .zip(integral.value(j).iter().zip(integral.value(i)))
            {
                *o = (b - a) - *o;
            }
        });
        Some(r)
    } else {
        None
    };
    if let Some(e) = err {
        return Err(e);
    }
    let report = remainder_scan(&integral, |i, j, out| {
        let _ = eval(grid.t(i), grid.t(j), out);
    });
    let fitted_zeta = report.slope;
    Ok(SewResult {
        integral,
        natural_remainder,
        remainder_report: report,
        fitted_zeta,
    })
}

/// Dyadic scan of `|delta I_st - g_st|` over strides `2, 4, ...` of the integral's grid.
fn remainder_scan(integral: &Path, mut germ: impl FnMut(usize, usize, &mut [f64])) -> DefectReport {
    let d = integral.dim();
    let grid = integral.grid();
    let top = (grid.steps() as f64).log2().floor() as u32;
    let strides = dyadic_strides(1, top.saturating_sub(1).max(1));
    let mut buf = vec![0.0; d];
    DefectReport::dyadic_scan(grid, &strides, |i, j| {
        germ(i, j, &mut buf);
        for (o, (b, a)) in buf
            .iter_mut()
            .zip(integral.value(j).iter().zip(integral.value(i)))
        {
            *o = (b - a) - *o;
        }
        norm(&buf)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_germ_is_reproduced() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 8).unwrap());
        let f = |t: f64| (3.0 * t).sin();
        let g = Germ::new(1, 2.0, move |s, t, out| out[0] = f(t) - f(s));
        let r = sew(&g, &grid, 3).unwrap();
        for i in 0..=8 {
            let t = grid.t(i);
            assert!((r.integral.value(i)[0] - (f(t) - f(0.0))).abs() < 1e-14);
        }
        assert!(r.remainder_report.max < 1e-14);
    }

    #[test]
    fn non_finite_germ_names_interval() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 4).unwrap());
        let g = Germ::new(1, 2.0, |s, t, out| {
            out[0] = if s >= 0.5 { f64::NAN } else { t - s }
        });
        match sew(&g, &grid, 0) {
            Err(Error::NonFiniteGerm { s, .. }) => assert_eq!(s, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn left_riemann_germ_of_constant() {
        let grid = Arc::new(TimeGrid::uniform(2.0, 16).unwrap());
        let g = Germ::new(2, 2.0, |s, t, out| {
            out[0] = 1.5 * (t - s);
            out[1] = -0.5 * (t - s);
        });
        let r = sew(&g, &grid, 4).unwrap();
        assert!((r.integral.value(16)[0] - 3.0).abs() < 1e-14);
        assert!((r.integral.value(16)[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut c = CompensatedSum::new(1);
        c.add(&[1.0]);
        for _ in 0..10 {
            c.add(&[1e-17]);
        }
        c.add(&[-1.0]);
        assert!((c.value()[0] - 1e-16).abs() < 1e-30);
    }
}
