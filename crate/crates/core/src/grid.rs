use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mesh `x_j`, `j = 0..=J`, with a node exactly at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    intervals: usize,
    h: f64,
    origin: usize,
}

impl Grid {
    pub const MIN_INTERVALS: usize = 16;

    pub fn new(x_min: f64, x_max: f64, intervals: usize) -> Result<Self> {
        Self::with_min_intervals(x_min, x_max, intervals, Self::MIN_INTERVALS)
    }

    /// The benchmark mesh: `[-40, 40]` with 3200 intervals, `h = 1/40`.
    pub fn benchmark() -> Self {
        Self::new(-40.0, 40.0, 3200).expect("benchmark grid is valid")
    }

    pub(crate) fn with_min_intervals(
        x_min: f64,
        x_max: f64,
        intervals: usize,
        min_intervals: usize,
    ) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < 0.0 && 0.0 < x_max) {
            return Err(Error::InvalidGrid(format!(
                "need x_min < 0 < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if intervals < min_intervals {
            return Err(Error::InvalidGrid(format!(
                "need at least {min_intervals} intervals, got {intervals}"
            )));
        }
        let position = -x_min * intervals as f64 / (x_max - x_min);
        let origin = position.round();
        if (position - origin).abs() > 1e-9 * position.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "x = 0 is not a grid node of [{x_min}, {x_max}] with {intervals} intervals \
                 (it falls at index {position})"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            intervals,
            h: (x_max - x_min) / intervals as f64,
            origin: origin as usize,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of intervals `J`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `J + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Index `j0` of the node at `x = 0`.
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// `x_j`, measured from the origin node so that mirrored nodes are exact negatives.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.origin as f64) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.x(j))
    }

    /// Same box, `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.x_min, self.x_max, self.intervals * factor)
    }

    /// True when every node has a mirror node.
    pub fn is_symmetric(&self) -> bool {
        2 * self.origin == self.intervals
    }
}

/// Real samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at node {j}",
                values[j]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the origin node.
    pub fn at_origin(&self) -> f64 {
        self.values[self.grid.origin]
    }

    /// `sqrt(h * sum u_j^2)`
    pub fn mass(&self) -> f64 {
        (self.grid.h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Rescales to the given mass.
    pub fn normalized(&self, mass: f64) -> Result<Self> {
        let current = self.mass();
        if !(current > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(self.scaled(mass / current))
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_j |u(x_j) - u(-x_j)|` over mirrored pairs.
    pub fn asymmetry(&self) -> f64 {
        let j0 = self.grid.origin;
        let reach = j0.min(self.grid.intervals - j0);
        (1..=reach)
            .map(|m| (self.values[j0 + m] - self.values[j0 - m]).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_grid() {
        let g = Grid::new(-40.0, 40.0, 3200).unwrap();
        assert_eq!(g.h(), 1.0 / 40.0);
        assert_eq!(g.origin(), 1600);
        assert_eq!(g.x(1600), 0.0);
        assert_eq!(g.x(0), -40.0);
        assert_eq!(g.x(3200), 40.0);
        assert_eq!(g.x(1700), -g.x(1500));
    }

    #[test]
    fn tiny_grid() {
        let g = Grid::with_min_intervals(-1.0, 1.0, 2, 2).unwrap();
        assert_eq!((g.h(), g.origin()), (1.0, 1));
    }

    #[test]
    fn origin_must_be_a_node() {
        assert!(Grid::with_min_intervals(-1.0, 0.9, 20, 2).is_err());
        assert!(Grid::new(-1.0, 0.9, 20).is_err());
        assert!(Grid::new(0.0, 1.0, 32).is_err());
        assert!(Grid::new(-1.0, 1.0, 8).is_err());
        let skew = Grid::new(-1.0, 3.0, 32).unwrap();
        assert_eq!(skew.origin(), 8);
        assert!(!skew.is_symmetric());
    }

    #[test]
    fn mass_and_normalization() {
        let g = Grid::new(-2.0, 2.0, 16).unwrap();
        let f = GridFunction::from_fn(g, |x| 1.0 + x * x).unwrap();
        let n = f.normalized(3.0).unwrap();
        assert!((n.mass() - 3.0).abs() < 1e-15);
        assert_eq!(GridFunction::zeros(g).normalized(1.0), Err(Error::ZeroMass));
        assert_eq!(f.asymmetry(), 0.0);
    }

    #[test]
    fn rejects_bad_values() {
        let g = Grid::new(-2.0, 2.0, 16).unwrap();
        assert!(GridFunction::new(g, vec![0.0; 3]).is_err());
        let mut v = vec![0.0; 17];
        v[3] = f64::NAN;
        assert!(GridFunction::new(g, v).is_err());
    }
}
