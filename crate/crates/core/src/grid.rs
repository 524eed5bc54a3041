//! Quantile functions on a uniform grid of cell midpoints.
//!
//! [`QuantileGrid`] carries a possibly non-monotone estimate `Q`. Sorting its
//! values gives the increasing rearrangement `Q†`, held by [`ProperQuantile`],
//! whose piecewise-linear inverse is the implicit CDF.

use serde::{Deserialize, Serialize};

use crate::error::{QmpError, Result};

/// Smallest value returned by [`quantile_density`].
pub const DENSITY_FLOOR: f64 = 1e-10;

/// Default number of grid points.
pub const DEFAULT_GRID_SIZE: usize = 200;

/// `n_U` cell midpoints `u_j = (j + 1/2) / n_U`, `j = 0..n_U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct UniformGrid {
    points: Vec<f64>,
}

impl UniformGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(QmpError::InvalidConfig(format!(
                "grid needs at least 2 points, got {size}"
            )));
        }
        let n = size as f64;
        Ok(UniformGrid {
            points: (0..size).map(|j| (j as f64 + 0.5) / n).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Spacing between neighbouring points, `1 / n_U`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.points.len() as f64
    }

    /// Smallest and largest grid point, `1/(2 n_U)` and `1 - 1/(2 n_U)`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }
}

impl TryFrom<usize> for UniformGrid {
    type Error = QmpError;
    fn try_from(size: usize) -> Result<Self> {
        UniformGrid::new(size)
    }
}

impl From<UniformGrid> for usize {
    fn from(g: UniformGrid) -> usize {
        g.size()
    }
}

/// Anything that stores one value per grid point.
pub trait GridFunction {
    fn grid(&self) -> &UniformGrid;
    fn values(&self) -> &[f64];
}

/// A quantile estimate on the grid; monotonicity is not required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(QmpError::DimensionMismatch {
                expected: grid.size(),
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(QmpError::Domain(format!(
                "quantile value at grid index {j} is not finite"
            )));
        }
        Ok(QuantileGrid { grid, values })
    }

    /// Builds the grid function `u -> f(u)`.
    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&u| f(u)).collect();
        QuantileGrid::new(grid, values)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl GridFunction for QuantileGrid {
    fn grid(&self) -> &UniformGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A rearranged, non-decreasing quantile function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperQuantile {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl ProperQuantile {
    /// Accepts values that are already non-decreasing.
    pub fn from_sorted(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        let q = QuantileGrid::new(grid, values)?;
        if let Some(j) = q.values.windows(2).position(|w| w[0] > w[1]) {
            return Err(QmpError::Domain(format!(
                "values decrease between grid indices {j} and {}",
                j + 1
            )));
        }
        Ok(ProperQuantile {
            grid: q.grid,
            values: q.values,
        })
    }

    /// View as an unconstrained grid function, e.g. as the start of an update.
    pub fn to_quantile_grid(&self) -> QuantileGrid {
        QuantileGrid {
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl GridFunction for ProperQuantile {
    fn grid(&self) -> &UniformGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Sorts grid values in place (the increasing rearrangement on a uniform grid).
#[inline]
pub fn rearrange_in_place(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}

/// Increasing rearrangement `Q†` of `q`.
pub fn rearrange(q: &QuantileGrid) -> ProperQuantile {
    let mut values = q.values.clone();
    rearrange_in_place(&mut values);
    ProperQuantile {
        grid: q.grid.clone(),
        values,
    }
}

/// Consuming variant of [`rearrange`].
pub fn rearrange_owned(q: QuantileGrid) -> ProperQuantile {
    let QuantileGrid { grid, mut values } = q;
    rearrange_in_place(&mut values);
    ProperQuantile { grid, values }
}

/// Implicit CDF `P(y)` of a rearranged grid quantile function, from its
/// sorted values. Piecewise-linear between grid points, clamped to the range
/// of the grid `[1/(2 n_U), 1 - 1/(2 n_U)]`.
pub fn implicit_cdf_sorted(points: &[f64], sorted: &[f64], y: f64) -> f64 {
    let n = sorted.len();
    // number of values <= y
    let count = sorted.partition_point(|&v| v <= y);
    if count == 0 {
        return points[0];
    }
    if count == n {
        return points[n - 1];
    }
    let j = count - 1;
    let (lo, hi) = (sorted[j], sorted[j + 1]);
    let t = (y - lo) / (hi - lo);
    points[j] + t * (points[j + 1] - points[j])
}

pub fn implicit_cdf(pq: &ProperQuantile, y: f64) -> f64 {
    implicit_cdf_sorted(pq.grid.points(), &pq.values, y)
}

/// Linear interpolation of grid values at `u`, constant beyond the outer
/// grid points.
pub fn interpolate(points: &[f64], values: &[f64], u: f64) -> f64 {
    let n = points.len();
    if u <= points[0] {
        return values[0];
    }
    if u >= points[n - 1] {
        return values[n - 1];
    }
    let h = points[1] - points[0];
    let pos = (u - points[0]) / h;
    let j = (pos.floor() as usize).min(n - 2);
    let t = pos - j as f64;
    values[j] + t * (values[j + 1] - values[j])
}

pub fn evaluate(pq: &ProperQuantile, u: f64) -> f64 {
    interpolate(pq.grid.points(), &pq.values, u)
}

/// Finite-difference quantile density, written into `out`.
pub fn quantile_density_into(values: &[f64], spacing: f64, out: &mut [f64]) {
    let n = values.len();
    out[0] = (values[1] - values[0]) / spacing;
    out[n - 1] = (values[n - 1] - values[n - 2]) / spacing;
    for j in 1..n - 1 {
        out[j] = (values[j + 1] - values[j - 1]) / (2.0 * spacing);
    }
    for d in out.iter_mut() {
        if !(*d >= DENSITY_FLOOR) {
            *d = DENSITY_FLOOR;
        }
    }
}

/// Quantile density `q†` by central differences (one-sided at the ends),
/// floored at [`DENSITY_FLOOR`].
pub fn quantile_density(pq: &ProperQuantile) -> Vec<f64> {
    let mut out = vec![0.0; pq.values.len()];
    quantile_density_into(&pq.values, pq.grid.spacing(), &mut out);
    out
}

/// `L²(0,1)` distance by the midpoint rule.
pub fn l2_distance(a: &impl GridFunction, b: &impl GridFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(QmpError::GridMismatch {
            left: a.grid().size(),
            right: b.grid().size(),
        });
    }
    Ok(l2_distance_values(a.values(), b.values()))
}

pub fn l2_distance_values(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Midpoint-rule integral `∫₀¹ Q(u) du`.
///
/// Summation runs over the values in sorted order, so the result is the same
/// bit pattern for `q` and any rearrangement of it.
pub fn mean_functional(q: &impl GridFunction) -> f64 {
    mean_of_values(q.values())
}

pub fn mean_of_values(values: &[f64]) -> f64 {
    let sum: f64 = if values.windows(2).all(|w| w[0] <= w[1]) {
        values.iter().sum()
    } else {
        let mut sorted = values.to_vec();
        rearrange_in_place(&mut sorted);
        sorted.iter().sum()
    };
    sum / values.len() as f64
}
