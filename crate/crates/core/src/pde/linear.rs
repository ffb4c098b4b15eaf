//! Frozen-coefficient linear solvers and the discrete adjoint.
//!
//! Forward: `(I - dt L^{n+1}) y^{n+1} = y^n + dt f^{n+1}`.
//! Adjoint (backward in time): `(I - dt L^{n+1}) p^n = p^{n+1} - dt h^n`, `p^N = p_T`.
//! Here `(L y)_i = [c_{i+1/2}(y_{i+1} - y_i) - c_{i-1/2}(y_i - y_{i-1})] / dx^2` is
//! symmetric, so the two recursions satisfy the exact discrete pairing
//! `<y^N, p^N> - <y^0, p^0> = dt Σ_{n<N} <f^{n+1}, p^n>` when `h = 0`.

use crate::error::{Error, Result};
use crate::pde::diffusion::DiffusionSpec;
use crate::pde::field::{SourceField, SpaceTimeField, Trajectory};
use crate::pde::grid::Grid;
use crate::tridiag;

/// Face coefficients `c_{i+1/2}` for every time level, `n_x + 1` faces per level.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficient {
    grid: Grid,
    faces: Vec<f64>,
}

impl FrozenCoefficient {
    /// Faces by arithmetic averaging of a nodal field `b`.
    pub fn from_nodal(b: &SourceField) -> Result<Self> {
        let min_b = b.min_value();
        if !(min_b > 0.0) {
            return Err(Error::NonellipticCoefficient { min_b });
        }
        let grid = *b.grid();
        let nf = grid.n_x() + 1;
        let mut faces = Vec::with_capacity(grid.n_levels() * nf);
        for level in b.levels() {
            faces.extend((0..nf).map(|i| 0.5 * (level[i] + level[i + 1])));
        }
        Ok(Self { grid, faces })
    }

    /// Faces `a((ỹ_i + ỹ_{i+1}) / 2)`; matches the quasilinear stencil exactly when
    /// the frozen state equals the solution.
    pub fn from_state(spec: &DiffusionSpec, state: &Trajectory) -> Self {
        let grid = *state.grid();
        let nf = grid.n_x() + 1;
        let mut faces = Vec::with_capacity(grid.n_levels() * nf);
        for level in state.levels() {
            faces.extend((0..nf).map(|i| spec.a(0.5 * (level[i] + level[i + 1]))));
        }
        Self { grid, faces }
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::NonellipticCoefficient { min_b: value });
        }
        Ok(Self {
            faces: vec![value; grid.n_levels() * (grid.n_x() + 1)],
            grid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let nf = self.grid.n_x() + 1;
        &self.faces[k * nf..(k + 1) * nf]
    }

    /// Solves `(I - dt L^{k}) x = rhs` on the interior nodes; `rhs` includes boundary entries.
    fn implicit_solve(&self, k: usize, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let m = n - 2;
        let dx = self.grid.dx();
        let r = self.grid.dt() / (dx * dx);
        let c = self.level(k);
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for row in 0..m {
            let (cl, cr) = (c[row], c[row + 1]);
            lower[row] = -r * cl;
            diag[row] = 1.0 + r * (cl + cr);
            upper[row] = -r * cr;
        }
        let mut x = rhs[1..n - 1].to_vec();
        let ok = tridiag::solve_in_place(&lower, &diag, &upper, &mut x);
        debug_assert!(ok, "M-matrix solve cannot hit a zero pivot");
        let mut out = vec![0.0; n];
        out[1..n - 1].copy_from_slice(&x);
        out
    }

    /// Linear forward solve with source `f` (step `n -> n+1` uses `f^{n+1}`).
    pub fn solve_forward(&self, y0: &[f64], f: &SourceField) -> Result<Trajectory> {
        self.check_shapes(y0, f)?;
        let dt = self.grid.dt();
        let mut y = Trajectory::zeros(self.grid);
        y.level_mut(0).copy_from_slice(y0);
        let n = self.grid.n_nodes();
        for k in 0..self.grid.n_t() {
            let rhs: Vec<f64> = (0..n).map(|i| y.get(k, i) + dt * f.get(k + 1, i)).collect();
            let next = self.implicit_solve(k + 1, &rhs);
            y.level_mut(k + 1).copy_from_slice(&next);
        }
        Ok(y)
    }

    /// Terminal state only, for the same recursion.
    pub fn terminal_state(&self, y0: &[f64], f: &SourceField) -> Result<Vec<f64>> {
        self.check_shapes(y0, f)?;
        let dt = self.grid.dt();
        let n = self.grid.n_nodes();
        let mut y = y0.to_vec();
        for k in 0..self.grid.n_t() {
            let rhs: Vec<f64> = (0..n).map(|i| y[i] + dt * f.get(k + 1, i)).collect();
            y = self.implicit_solve(k + 1, &rhs);
        }
        Ok(y)
    }

    /// Backward adjoint solve from `p_T` with right-hand side `h` (may be `None` for `h = 0`).
    pub fn solve_adjoint(&self, p_terminal: &[f64], h: Option<&SourceField>) -> Result<Trajectory> {
        let n = self.grid.n_nodes();
        if p_terminal.len() != n {
            return Err(Error::InvalidInput("terminal profile length mismatch".into()));
        }
        if p_terminal[0] != 0.0 || p_terminal[n - 1] != 0.0 {
            return Err(Error::InvalidInput("terminal profile must vanish at the boundary".into()));
        }
        if let Some(h) = h {
            if h.grid() != &self.grid {
                return Err(Error::InvalidInput("adjoint source grid mismatch".into()));
            }
        }
        let dt = self.grid.dt();
        let n_t = self.grid.n_t();
        let mut p = Trajectory::zeros(self.grid);
        p.level_mut(n_t).copy_from_slice(p_terminal);
        for k in (0..n_t).rev() {
            let rhs: Vec<f64> = (0..n)
                .map(|i| p.get(k + 1, i) - h.map_or(0.0, |h| dt * h.get(k, i)))
                .collect();
            let prev = self.implicit_solve(k + 1, &rhs);
            p.level_mut(k).copy_from_slice(&prev);
        }
        Ok(p)
    }

    fn check_shapes(&self, y0: &[f64], f: &SpaceTimeField) -> Result<()> {
        if f.grid() != &self.grid || y0.len() != self.grid.n_nodes() {
            return Err(Error::InvalidInput("shapes do not match the coefficient grid".into()));
        }
        if y0[0] != 0.0 || y0[y0.len() - 1] != 0.0 {
            return Err(Error::InvalidInput("initial profile must vanish at the boundary".into()));
        }
        Ok(())
    }
}

/// Backward-in-time solve of `p_t + (b p_x)_x = h`, `p(T) = p_T`, with nodal coefficient `b`.
pub fn solve_adjoint(b: &SourceField, p_terminal: &[f64], h: &SourceField, grid: &Grid) -> Result<Trajectory> {
    if b.grid() != grid {
        return Err(Error::InvalidInput("coefficient grid mismatch".into()));
    }
    FrozenCoefficient::from_nodal(b)?.solve_adjoint(p_terminal, Some(h))
}

/// Discrete space-time pairing `dt Σ_{n<N} <f^{n+1}, p^n>` matching the adjoint recursion.
pub fn source_pairing(f: &SourceField, p: &Trajectory) -> f64 {
    let g = f.grid();
    let dx = g.dx();
    (0..g.n_t())
        .map(|n| dx * f.level(n + 1).iter().zip(p.level(n)).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        * g.dt()
}
