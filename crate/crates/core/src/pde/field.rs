use crate::error::{Error, Result};
use crate::pde::grid::Grid;

/// Space-time array laid out as `n_t + 1` profiles of `n_x + 2` nodes each.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    data: Vec<f64>,
}

/// State `y(x, t)` with homogeneous Dirichlet boundary nodes.
pub type Trajectory = SpaceTimeField;

/// Source or coefficient field `f(x, t)`.
pub type SourceField = SpaceTimeField;

impl SpaceTimeField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            data: vec![0.0; grid.n_levels() * grid.n_nodes()],
            grid,
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            data: vec![value; grid.n_levels() * grid.n_nodes()],
            grid,
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid, f: F) -> Self {
        let mut field = Self::zeros(grid);
        for k in 0..grid.n_levels() {
            let t = grid.t(k);
            for (i, v) in field.level_mut(k).iter_mut().enumerate() {
                *v = f(grid.x(i), t);
            }
        }
        field
    }

    pub fn from_levels(grid: Grid, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != grid.n_levels() || levels.iter().any(|l| l.len() != grid.n_nodes()) {
            return Err(Error::InvalidInput("level shapes do not match the grid".into()));
        }
        Ok(Self {
            grid,
            data: levels.into_iter().flatten().collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_nodes();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.grid.n_nodes())
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.grid.n_nodes() + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn terminal(&self) -> &[f64] {
        self.level(self.grid.n_t())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every level has zero boundary entries.
    pub fn has_zero_boundary(&self) -> bool {
        let last = self.grid.n_nodes() - 1;
        self.levels().all(|l| l[0] == 0.0 && l[last] == 0.0)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Levels `start..=end` re-gridded as a field over `(0, t_end - t_start)`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        let n_t = end.saturating_sub(start);
        let horizon = self.grid.t(end) - self.grid.t(start);
        let grid = self.grid.with_time(n_t, horizon)?;
        let n = self.grid.n_nodes();
        Ok(Self {
            grid,
            data: self.data[start * n..(end + 1) * n].to_vec(),
        })
    }
}

/// Discrete norms: trapezoid in space and time, centered differences for derivatives.
pub mod norms {
    use super::SpaceTimeField;

    /// `∫_0^1 v^2 dx` by the trapezoid rule.
    pub fn l2_sq(v: &[f64], dx: f64) -> f64 {
        let n = v.len();
        let interior: f64 = v[1..n - 1].iter().map(|x| x * x).sum();
        dx * (interior + 0.5 * (v[0] * v[0] + v[n - 1] * v[n - 1]))
    }

    pub fn l2(v: &[f64], dx: f64) -> f64 {
        l2_sq(v, dx).sqrt()
    }

    pub fn linf(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Nodal first derivative: centered at interior nodes, second-order one-sided at the ends.
    pub fn derivative(v: &[f64], dx: f64) -> Vec<f64> {
        let n = v.len();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        }
        if n >= 3 {
            d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
            d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
        }
        d
    }

    /// Interior second differences; zero at the boundary nodes.
    pub fn second_derivative(v: &[f64], dx: f64) -> Vec<f64> {
        let n = v.len();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
        }
        d
    }

    /// `∫ v_x^2 dx` with centered differences and the trapezoid rule.
    pub fn h1_seminorm_sq(v: &[f64], dx: f64) -> f64 {
        l2_sq(&derivative(v, dx), dx)
    }

    pub fn h1_sq(v: &[f64], dx: f64) -> f64 {
        l2_sq(v, dx) + h1_seminorm_sq(v, dx)
    }

    pub fn h1(v: &[f64], dx: f64) -> f64 {
        h1_sq(v, dx).sqrt()
    }

    /// `∬_{Q_T} f^2` with the trapezoid rule in both directions.
    pub fn l2_space_time_sq(f: &SpaceTimeField) -> f64 {
        let g = f.grid();
        let dx = g.dx();
        let n_t = g.n_t();
        let mut total = 0.0;
        for (k, level) in f.levels().enumerate() {
            let w = if k == 0 || k == n_t { 0.5 } else { 1.0 };
            total += w * l2_sq(level, dx);
        }
        total * g.dt()
    }

    pub fn l2_space_time(f: &SpaceTimeField) -> f64 {
        l2_space_time_sq(f).sqrt()
    }

    /// `||a - b||_{L^2(Q_T)}` for fields on the same grid.
    pub fn l2_space_time_distance(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
        let diff: Vec<Vec<f64>> = a
            .levels()
            .zip(b.levels())
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
            .collect();
        let field = SpaceTimeField::from_levels(*a.grid(), diff).expect("same grid");
        l2_space_time(&field)
    }

    /// Discrete spatial pairing `dx * Σ v_i w_i` (exact trapezoid for zero boundary data).
    pub fn inner(v: &[f64], w: &[f64], dx: f64) -> f64 {
        dx * v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }
}
