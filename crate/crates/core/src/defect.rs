//! Scale-resolved defect measurements and log-log exponent fits.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Maximum of a defect quantity, optionally resolved by scale with a fitted exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    /// Overall maximum.
    pub max: f64,
    /// `(s, t)` where the overall maximum was attained, when known.
    pub argmax: Option<(f64, f64)>,
    /// Interval lengths, coarsest first.
    pub scales: Vec<f64>,
    /// Maximum defect at each scale.
    pub maxima: Vec<f64>,
    /// Least-squares slope of `log max` against `log scale`; `+inf` if every maximum is zero.
    pub slope: f64,
}

impl DefectReport {
    pub fn scalar(max: f64, argmax: Option<(f64, f64)>) -> Self {
        Self {
            max,
            argmax,
            scales: Vec::new(),
            maxima: Vec::new(),
            slope: f64::NAN,
        }
    }

    pub fn from_scales(scales: Vec<f64>, maxima: Vec<f64>) -> Self {
        let max = maxima.iter().copied().fold(0.0, f64::max);
        let slope = loglog_slope(&scales, &maxima);
        Self {
            max,
            argmax: None,
            scales,
            maxima,
            slope,
        }
    }

    /// Scans the dyadic pairs `(k s, (k+1) s)` of grid indices for each stride `s`.
    pub fn dyadic_scan(
        grid: &TimeGrid,
        strides: &[usize],
        mut defect: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let n = grid.steps();
        let mut scales = Vec::with_capacity(strides.len());
        let mut maxima = Vec::with_capacity(strides.len());
        let mut best = (0.0, None);
        for &stride in strides {
            if stride == 0 || stride > n {
                continue;
            }
            let mut m: f64 = 0.0;
            let mut len: f64 = 0.0;
            let mut k = 0;
            while (k + 1) * stride <= n {
                let (i, j) = (k * stride, (k + 1) * stride);
                let v = defect(i, j);
                if v.is_nan() {
                    m = f64::NAN;
                } else if v > m {
                    m = v;
                }
                if v > best.0 {
                    best = (v, Some((grid.t(i), grid.t(j))));
                }
                len = len.max(grid.t(j) - grid.t(i));
                k += 1;
            }
            scales.push(len);
            maxima.push(m);
        }
        let mut report = Self::from_scales(scales, maxima);
        report.argmax = best.1;
        report
    }

    /// Number of scales carrying data.
    pub fn levels(&self) -> usize {
        self.scales.len()
    }
}

/// Least-squares slope of `log y` on `log x` over the entries with `y > 0`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.is_empty() {
        return if y.iter().all(|v| *v == 0.0) {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    linear_fit(&pts).0
}

/// Ordinary least squares `y = slope x + intercept`, returning `(slope, intercept, r2)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (f64::NAN, my, f64::NAN);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, my - slope * mx, r2)
}

/// Exponent of a scale-resolved report; requires at least three levels.
pub fn scaling_exponent(report: &DefectReport) -> Result<f64> {
    if report.levels() < 3 {
        return Err(Error::InvalidParameter(format!(
            "exponent fit needs at least 3 scales, got {}",
            report.levels()
        )));
    }
    Ok(report.slope)
}

/// Strides `2^lo, ..., 2^hi` (inclusive).
pub fn dyadic_strides(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|l| 1usize << l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let scales: Vec<f64> = (1..7).map(|l| 2f64.powi(-l)).collect();
        let maxima: Vec<f64> = scales.iter().map(|h| 3.0 * h.powf(1.35)).collect();
        let r = DefectReport::from_scales(scales, maxima);
        assert!((r.slope - 1.35).abs() < 1e-12);
        assert!((scaling_exponent(&r).unwrap() - 1.35).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_infinite() {
        let r = DefectReport::from_scales(vec![0.5, 0.25, 0.125], vec![0.0; 3]);
        assert_eq!(r.slope, f64::INFINITY);
    }

    #[test]
    fn too_few_levels_rejected() {
        let r = DefectReport::from_scales(vec![0.5, 0.25], vec![1.0, 0.5]);
        assert!(scaling_exponent(&r).is_err());
    }
}
