//! Sampled one- and two-parameter paths.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Values in `R^dim` at every grid point, interpolated linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Arc<TimeGrid>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * dim {
            return Err(Error::Dimension {
                expected: grid.len() * dim,
                got: values.len(),
            });
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: Arc<TimeGrid>, dim: usize) -> Self {
        let values = vec![0.0; grid.len() * dim];
        Self { grid, dim, values }
    }

    pub fn from_fn(grid: Arc<TimeGrid>, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for (i, chunk) in values.chunks_mut(dim.max(1)).enumerate().take(grid.len()) {
            f(grid.t(i), chunk);
        }
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increment(&self, i: usize, j: usize) -> Vec<f64> {
        self.value(j)
            .iter()
            .zip(self.value(i))
            .map(|(b, a)| b - a)
            .collect()
    }

    pub fn increment_into(&self, i: usize, j: usize, out: &mut [f64]) {
        for ((o, b), a) in out.iter_mut().zip(self.value(j)).zip(self.value(i)) {
            *o = b - a;
        }
    }

    /// Linear interpolation at an arbitrary time in `[0, T]`.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let i = self.grid.floor_index(t);
        if i + 1 >= self.len() {
            return self.value(self.len() - 1).to_vec();
        }
        let (t0, t1) = (self.grid.t(i), self.grid.t(i + 1));
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.value(i)
            .iter()
            .zip(self.value(i + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Values on a subgrid of this path's grid.
    pub fn restrict(&self, sub: &Arc<TimeGrid>) -> Result<Path> {
        let idx = self.grid.embed(sub)?;
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in &idx {
            values.extend_from_slice(self.value(i));
        }
        Path::new(sub.clone(), self.dim, values)
    }

    /// Path minus its initial value.
    pub fn shifted_to_origin(&self) -> Path {
        let x0 = self.value(0).to_vec();
        let mut out = self.clone();
        for chunk in out.values.chunks_mut(self.dim.max(1)) {
            for (v, a) in chunk.iter_mut().zip(&x0) {
                *v -= a;
            }
        }
        out
    }

    pub fn sup_distance(&self, other: &Path) -> f64 {
        self.values
            .chunks(self.dim.max(1))
            .zip(other.values.chunks(other.dim.max(1)))
            .map(|(a, b)| euclid_dist(a, b))
            .fold(0.0, f64::max)
    }
}

/// Two-parameter function `(i < j) -> R^size`, stored lower-triangularly.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamIncrement {
    grid: Arc<TimeGrid>,
    size: usize,
    values: Vec<f64>,
}

#[inline]
fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

impl TwoParamIncrement {
    pub fn zeros(grid: Arc<TimeGrid>, size: usize) -> Self {
        let n = grid.len();
        let values = vec![0.0; n * (n - 1) / 2 * size];
        Self { grid, size, values }
    }

    pub fn from_fn(
        grid: Arc<TimeGrid>,
        size: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut out = Self::zeros(grid, size);
        let n = out.grid.len();
        for j in 1..n {
            for i in 0..j {
                let k = pair_index(i, j) * size;
                f(i, j, &mut out.values[k..k + size]);
            }
        }
        out
    }

    /// Increments `f_j - f_i` of a path.
    pub fn from_path(path: &Path) -> Self {
        Self::from_fn(path.grid_arc().clone(), path.dim(), |i, j, out| {
            path.increment_into(i, j, out)
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let k = pair_index(i, j) * self.size;
        &self.values[k..k + self.size]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = pair_index(i, j) * self.size;
        &mut self.values[k..k + self.size]
    }
}

/// Anything that yields a norm for every ordered pair of grid indices.
pub trait Increments {
    fn grid(&self) -> &TimeGrid;
    fn pair_norm(&self, i: usize, j: usize) -> f64;
}

impl Increments for Path {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn pair_norm(&self, i: usize, j: usize) -> f64 {
        euclid_dist(self.value(i), self.value(j))
    }
}

impl Increments for TwoParamIncrement {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn pair_norm(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            norm(self.get(i, j))
        }
    }
}

/// Closure-backed increments.
pub struct FnIncrements<'a, F: Fn(usize, usize) -> f64> {
    pub grid: &'a TimeGrid,
    pub norm: F,
}

impl<F: Fn(usize, usize) -> f64> Increments for FnIncrements<'_, F> {
    fn grid(&self) -> &TimeGrid {
        self.grid
    }

    fn pair_norm(&self, i: usize, j: usize) -> f64 {
        (self.norm)(i, j)
    }
}

/// Euclidean / Frobenius norm of a flat coefficient array.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `out += a ⊗ b` for row-major `a.len() x b.len()` storage.
#[inline]
pub fn add_outer(out: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    let m = b.len();
    for (r, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let s = scale * ai;
        for (o, &bj) in out[r * m..(r + 1) * m].iter_mut().zip(b) {
            *o += s * bj;
        }
    }
}
