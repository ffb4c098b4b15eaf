//! Forward solver in Kirchhoff variables: with `z = A(y)` and `B = A^{-1}` the equation
//! becomes `(B(z))_t - z_xx = f`.

use crate::error::{Error, Result};
use crate::pde::diffusion::DiffusionSpec;
use crate::pde::field::{SourceField, Trajectory};
use crate::pde::grid::Grid;
use crate::pde::solver::{NEWTON_MAX_ITER, NEWTON_TOL};
use crate::tridiag;

/// Backward-Euler step `B(z) - dt z_xx = y_prev + dt f_next` for `z`, returning `y = B(z)`.
fn step(y_prev: &[f64], dt: f64, f_next: &[f64], spec: &DiffusionSpec) -> Result<Vec<f64>> {
    let n = y_prev.len();
    let m = n - 2;
    let dx = 1.0 / (n - 1) as f64;
    let r = dt / (dx * dx);
    let rhs: Vec<f64> = (0..n).map(|i| y_prev[i] + dt * f_next[i]).collect();
    let tol = NEWTON_TOL * rhs[1..n - 1].iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));

    let mut z: Vec<f64> = y_prev.iter().map(|&y| spec.antiderivative(y)).collect();
    z[0] = 0.0;
    z[n - 1] = 0.0;
    let mut y = vec![0.0; n];

    let residual = |z: &[f64], y: &mut [f64]| -> Result<(Vec<f64>, f64)> {
        for i in 1..n - 1 {
            y[i] = spec.inverse_antiderivative(z[i])?;
        }
        let mut res = vec![0.0; n];
        let mut norm = 0.0_f64;
        for i in 1..n - 1 {
            res[i] = y[i] - r * (z[i + 1] - 2.0 * z[i] + z[i - 1]) - rhs[i];
            norm = norm.max(res[i].abs());
        }
        Ok((res, norm))
    };

    let (mut res, mut norm) = residual(&z, &mut y)?;
    let lower = vec![-r; m];
    let upper = vec![-r; m];
    for _ in 0..NEWTON_MAX_ITER {
        if norm <= tol {
            return Ok(y);
        }
        // B'(z) = 1 / a(B(z))
        let diag: Vec<f64> = (1..n - 1).map(|i| 1.0 / spec.a(y[i]) + 2.0 * r).collect();
        let mut delta: Vec<f64> = res[1..n - 1].iter().map(|v| -v).collect();
        if !tridiag::solve_in_place(&lower, &diag, &upper, &mut delta) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = z.clone();
            for (row, d) in delta.iter().enumerate() {
                trial[row + 1] += step * d;
            }
            let mut y_trial = vec![0.0; n];
            let (res_t, norm_t) = residual(&trial, &mut y_trial)?;
            if norm_t.is_finite() && (norm_t < norm || norm_t <= tol) {
                z = trial;
                y = y_trial;
                res = res_t;
                norm = norm_t;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm <= tol {
        return Ok(y);
    }
    Err(Error::SolverDiverged {
        time_index: None,
        residual: norm,
    })
}

/// Backward-Euler solve in Kirchhoff variables, returned in the original variable `y`.
pub fn solve_forward_kirchhoff(
    y0: &[f64],
    f: &SourceField,
    grid: &Grid,
    spec: &DiffusionSpec,
) -> Result<Trajectory> {
    if f.grid() != grid || y0.len() != grid.n_nodes() {
        return Err(Error::InvalidInput("shapes do not match the grid".into()));
    }
    if y0[0] != 0.0 || y0[grid.n_nodes() - 1] != 0.0 || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial profile must be finite and vanish at the boundary".into(),
        ));
    }
    let mut traj = Trajectory::zeros(*grid);
    traj.level_mut(0).copy_from_slice(y0);
    for k in 0..grid.n_t() {
        let next = step(traj.level(k), grid.dt(), f.level(k + 1), spec).map_err(|e| match e {
            Error::SolverDiverged { residual, .. } => Error::SolverDiverged {
                time_index: Some(k + 1),
                residual,
            },
            other => other,
        })?;
        traj.level_mut(k + 1).copy_from_slice(&next);
    }
    Ok(traj)
}
