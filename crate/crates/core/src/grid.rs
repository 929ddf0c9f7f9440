//! Time grids on `[0, T]`.

use crate::error::{Error, Result};

/// Strictly increasing times `0 = t_0 < ... < t_n = T` with `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    dyadic_level: Option<u32>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateGrid(format!(
                "need at least two points, got {}",
                points.len()
            )));
        }
        if points[0] != 0.0 {
            return Err(Error::DegenerateGrid(format!(
                "grid must start at 0, starts at {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::DegenerateGrid(format!(
                    "points must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            points,
            dyadic_level: None,
        })
    }

    /// Uniform grid with `steps` intervals.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::DegenerateGrid(format!(
                "uniform grid needs steps >= 1 and T > 0 (steps = {steps}, T = {horizon})"
            )));
        }
        let h = horizon / steps as f64;
        let mut points: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        points[steps] = horizon;
        Ok(Self {
            points,
            dyadic_level: None,
        })
    }

    /// Uniform grid with `2^level` intervals.
    pub fn dyadic(horizon: f64, level: u32) -> Result<Self> {
        if level > 24 {
            return Err(Error::InvalidParameter(format!(
                "dyadic level {level} is too fine"
            )));
        }
        let mut g = Self::uniform(horizon, 1usize << level)?;
        g.dyadic_level = Some(level);
        Ok(g)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn t(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn dyadic_level(&self) -> Option<u32> {
        self.dyadic_level
    }

    /// Index of the grid point equal to `t` up to a relative tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.points.partition_point(|&p| p < t - tol);
        if pos < self.points.len() && (self.points[pos] - t).abs() <= tol {
            Some(pos)
        } else {
            None
        }
    }

    /// Largest index `i` with `t_i <= t` (clamped to the grid).
    pub fn floor_index(&self, t: f64) -> usize {
        if let Some(i) = self.index_of(t) {
            return i;
        }
        let pos = self.points.partition_point(|&p| p <= t);
        pos.saturating_sub(1).min(self.points.len() - 1)
    }

    /// Every `stride`-th point; the last point must be reached exactly.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.steps() % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by stride {stride}",
                self.steps()
            )));
        }
        let points = self.points.iter().copied().step_by(stride).collect();
        let dyadic_level = match (self.dyadic_level, stride.is_power_of_two()) {
            (Some(l), true) => {
                let s = stride.trailing_zeros();
                (s <= l).then(|| l - s)
            }
            _ => None,
        };
        Ok(Self {
            points,
            dyadic_level,
        })
    }

    /// Splits every interval into `2^levels` equal pieces.
    pub fn refine_dyadic(&self, levels: u32) -> Self {
        let k = 1usize << levels;
        let mut points = Vec::with_capacity(self.steps() * k + 1);
        for w in self.points.windows(2) {
            let h = (w[1] - w[0]) / k as f64;
            for j in 0..k {
                points.push(w[0] + j as f64 * h);
            }
        }
        points.push(self.horizon());
        Self {
            points,
            dyadic_level: self.dyadic_level.map(|l| l + levels),
        }
    }

    /// Indices of `other`'s points inside `self`; errors when `other` is not a subgrid.
    pub fn embed(&self, other: &TimeGrid) -> Result<Vec<usize>> {
        other
            .points
            .iter()
            .map(|&t| {
                self.index_of(t).ok_or_else(|| {
                    Error::GridMismatch(format!("time {t} is not a point of the reference grid"))
                })
            })
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.horizon() / self.steps() as f64;
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    /// Restriction to indices `lo..=hi`, shifted so that it starts at 0.
    pub fn window(&self, lo: usize, hi: usize) -> Result<Self> {
        if hi <= lo || hi >= self.points.len() {
            return Err(Error::DegenerateGrid(format!("empty window [{lo}, {hi}]")));
        }
        let t0 = self.points[lo];
        let points = self.points[lo..=hi].iter().map(|t| t - t0).collect();
        Ok(Self {
            points,
            dyadic_level: None,
        })
    }
}
