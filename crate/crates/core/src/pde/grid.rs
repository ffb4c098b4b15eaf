use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform space-time grid on `(0, 1) x (0, T)`.
///
/// Spatial nodes are `x_i = i * dx` for `i = 0..=n_x + 1`, so the two boundary nodes
/// are included in every profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_x: usize,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    pub fn new(n_x: usize, n_t: usize, horizon: f64) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::InvalidInput(format!("n_x = {n_x} must be >= 3")));
        }
        if n_t < 2 {
            return Err(Error::InvalidInput(format!("n_t = {n_t} must be >= 2")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon T = {horizon} must be > 0")));
        }
        Ok(Self { n_x, n_t, horizon })
    }

    /// Interior node count.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Profile length including both boundary nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_x + 2
    }

    pub fn n_levels(&self) -> usize {
        self.n_t + 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n_x + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_x + 1 {
            1.0
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_t {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x(i)).collect()
    }

    /// Same spatial resolution over a different time window.
    pub fn with_time(&self, n_t: usize, horizon: f64) -> Result<Self> {
        Grid::new(self.n_x, n_t, horizon)
    }

    /// Samples `f` at every node, forcing the boundary entries to zero.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n_nodes()).map(|i| f(self.x(i))).collect();
        v[0] = 0.0;
        v[self.n_x + 1] = 0.0;
        v
    }
}

/// Open subinterval `(lo, hi)` of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("interval ({lo}, {hi}) is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Closure lies strictly inside `(0, 1)`.
    pub fn is_compactly_inside_unit(&self) -> bool {
        self.lo > 0.0 && self.hi < 1.0
    }

    /// Closure of `self` lies inside the open interval `other`.
    pub fn closure_inside(&self, other: &Interval) -> bool {
        other.lo < self.lo && self.hi < other.hi
    }

    /// Node indicator on `grid`: `1` at nodes strictly inside the interval.
    pub fn mask(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.n_nodes())
            .map(|i| if self.contains(grid.x(i)) { 1.0 } else { 0.0 })
            .collect()
    }
}
