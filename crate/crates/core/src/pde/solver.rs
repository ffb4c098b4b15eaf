//! Implicit solvers for `y_t - (a(y) y_x)_x = f` on a uniform grid.
//!
//! The spatial operator is the conservative flux divergence
//! `D(y)_i = [a(m_{i+1/2})(y_{i+1} - y_i) - a(m_{i-1/2})(y_i - y_{i-1})] / dx^2`
//! with the midpoint state `m_{i+1/2} = (y_i + y_{i+1}) / 2`.
//! Step `n -> n+1` uses the source slice `f^{n+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::diffusion::DiffusionSpec;
use crate::pde::field::{SourceField, Trajectory};
use crate::pde::grid::Grid;
use crate::tridiag;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

impl TimeScheme {
    fn implicit_weight(self) -> f64 {
        match self {
            TimeScheme::BackwardEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }
}

/// Conservative flux divergence `D(y)` at interior nodes (boundary entries 0).
pub fn flux_divergence(y: &[f64], spec: &DiffusionSpec) -> Vec<f64> {
    let n = y.len();
    let dx = 1.0 / (n - 1) as f64;
    let inv_dx2 = 1.0 / (dx * dx);
    let flux: Vec<f64> = (0..n - 1)
        .map(|i| spec.a(0.5 * (y[i] + y[i + 1])) * (y[i + 1] - y[i]))
        .collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (flux[i] - flux[i - 1]) * inv_dx2;
    }
    d
}

/// One backward-Euler step `y - dt D(y) = y_prev + dt f_next`.
pub fn step_implicit(y_prev: &[f64], dt: f64, f_next: &[f64], spec: &DiffusionSpec) -> Result<Vec<f64>> {
    step_theta(y_prev, dt, f_next, spec, TimeScheme::BackwardEuler)
}

/// θ-scheme step `y - θ dt D(y) = y_prev + (1-θ) dt D(y_prev) + dt f_next`, solved by
/// damped Newton with the exact tridiagonal Jacobian.
pub fn step_theta(
    y_prev: &[f64],
    dt: f64,
    f_next: &[f64],
    spec: &DiffusionSpec,
    scheme: TimeScheme,
) -> Result<Vec<f64>> {
    let n = y_prev.len();
    if f_next.len() != n || n < 5 {
        return Err(Error::InvalidInput(format!(
            "profile lengths differ ({} vs {}) or are too short",
            n,
            f_next.len()
        )));
    }
    let theta = scheme.implicit_weight();
    let mut rhs: Vec<f64> = (0..n).map(|i| y_prev[i] + dt * f_next[i]).collect();
    if theta < 1.0 {
        let d_prev = flux_divergence(y_prev, spec);
        for i in 0..n {
            rhs[i] += (1.0 - theta) * dt * d_prev[i];
        }
    }
    rhs[0] = 0.0;
    rhs[n - 1] = 0.0;
    let tol = NEWTON_TOL * rhs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let c = theta * dt;

    let residual = |y: &[f64]| -> Vec<f64> {
        let d = flux_divergence(y, spec);
        let mut r = vec![0.0; n];
        for i in 1..n - 1 {
            r[i] = y[i] - c * d[i] - rhs[i];
        }
        r
    };
    let max_norm = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut y = y_prev.to_vec();
    y[0] = 0.0;
    y[n - 1] = 0.0;
    let mut r = residual(&y);
    let mut r_norm = max_norm(&r);
    let dx = 1.0 / (n - 1) as f64;
    let inv_dx2 = 1.0 / (dx * dx);
    let m = n - 2;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for _ in 0..NEWTON_MAX_ITER {
        if r_norm <= tol {
            return Ok(y);
        }
        for row in 0..m {
            let i = row + 1;
            let mid_r = 0.5 * (y[i] + y[i + 1]);
            let mid_l = 0.5 * (y[i - 1] + y[i]);
            let (ar, apr) = (spec.a(mid_r), spec.a_prime(mid_r));
            let (al, apl) = (spec.a(mid_l), spec.a_prime(mid_l));
            let gr = y[i + 1] - y[i];
            let gl = y[i] - y[i - 1];
            // dD_i/dy_{i+1}, dD_i/dy_i, dD_i/dy_{i-1}
            let d_up = (0.5 * apr * gr + ar) * inv_dx2;
            let d_mid = (0.5 * apr * gr - ar - 0.5 * apl * gl - al) * inv_dx2;
            let d_lo = (-0.5 * apl * gl + al) * inv_dx2;
            lower[row] = -c * d_lo;
            diag[row] = 1.0 - c * d_mid;
            upper[row] = -c * d_up;
        }
        let mut delta: Vec<f64> = r[1..n - 1].iter().map(|v| -v).collect();
        if !tridiag::solve_in_place(&lower, &diag, &upper, &mut delta) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = y.clone();
            for row in 0..m {
                trial[row + 1] += step * delta[row];
            }
            let r_trial = residual(&trial);
            let n_trial = max_norm(&r_trial);
            if n_trial.is_finite() && (n_trial < r_norm || n_trial <= tol) {
                y = trial;
                r = r_trial;
                r_norm = n_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r_norm <= tol {
        return Ok(y);
    }
    Err(Error::SolverDiverged {
        time_index: None,
        residual: r_norm,
    })
}

fn check_initial(y0: &[f64], grid: &Grid) -> Result<()> {
    if y0.len() != grid.n_nodes() {
        return Err(Error::InvalidInput(format!(
            "initial profile has {} nodes, grid expects {}",
            y0.len(),
            grid.n_nodes()
        )));
    }
    if y0[0] != 0.0 || y0[grid.n_nodes() - 1] != 0.0 {
        return Err(Error::InvalidInput("initial profile must vanish at the boundary".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial profile is not finite".into()));
    }
    Ok(())
}

/// Forward solve with backward Euler.
pub fn solve_forward(y0: &[f64], f: &SourceField, grid: &Grid, spec: &DiffusionSpec) -> Result<Trajectory> {
    solve_forward_with(y0, f, grid, spec, TimeScheme::BackwardEuler)
}

pub fn solve_forward_with(
    y0: &[f64],
    f: &SourceField,
    grid: &Grid,
    spec: &DiffusionSpec,
    scheme: TimeScheme,
) -> Result<Trajectory> {
    if f.grid() != grid {
        return Err(Error::InvalidInput("source field grid does not match".into()));
    }
    solve_forward_feedback(y0, grid, spec, scheme, |k, _| f.level(k + 1).to_vec())
}

/// Free evolution (`f ≡ 0`).
pub fn solve_free(y0: &[f64], grid: &Grid, spec: &DiffusionSpec) -> Result<Trajectory> {
    let n = grid.n_nodes();
    solve_forward_feedback(y0, grid, spec, TimeScheme::BackwardEuler, |_, _| vec![0.0; n])
}

/// Forward solve where the source for step `k -> k+1` is produced from the state at
/// level `k` by `source(k, y_k)`.
pub fn solve_forward_feedback<S>(
    y0: &[f64],
    grid: &Grid,
    spec: &DiffusionSpec,
    scheme: TimeScheme,
    mut source: S,
) -> Result<Trajectory>
where
    S: FnMut(usize, &[f64]) -> Vec<f64>,
{
    check_initial(y0, grid)?;
    let mut traj = Trajectory::zeros(*grid);
    traj.level_mut(0).copy_from_slice(y0);
    let dt = grid.dt();
    for k in 0..grid.n_t() {
        let f_next = source(k, traj.level(k));
        let next = step_theta(traj.level(k), dt, &f_next, spec, scheme).map_err(|e| match e {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::field::norms;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sine_spec() -> DiffusionSpec {
        DiffusionSpec::build(
            Arc::new(|s: f64| 2.0 + s.sin()),
            Arc::new(|s: f64| s.cos()),
            (-4.0, 4.0),
            1001,
        )
        .unwrap()
    }

    /// Independent linear backward-Euler step for `a ≡ c`.
    fn linear_heat_step(y: &[f64], dt: f64, c: f64, f: &[f64]) -> Vec<f64> {
        let n = y.len();
        let dx = 1.0 / (n - 1) as f64;
        let r = c * dt / (dx * dx);
        let m = n - 2;
        let lower = vec![-r; m];
        let diag = vec![1.0 + 2.0 * r; m];
        let upper = vec![-r; m];
        let mut rhs: Vec<f64> = (1..n - 1).map(|i| y[i] + dt * f[i]).collect();
        assert!(tridiag::solve_in_place(&lower, &diag, &upper, &mut rhs));
        let mut out = vec![0.0; n];
        out[1..n - 1].copy_from_slice(&rhs);
        out
    }

    #[test]
    fn zero_is_fixed_point() {
        let spec = sine_spec();
        let y = step_implicit(&[0.0; 20], 0.01, &[0.0; 20], &spec).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_exact_linear_step() {
        let grid = Grid::new(63, 10, 0.01).unwrap();
        let y0 = grid.sample(|x| (PI * x).sin());
        let zero = vec![0.0; grid.n_nodes()];
        for c in [1.0, 2.5] {
            let spec = DiffusionSpec::constant(c, (-2.0, 2.0)).unwrap();
            let got = step_implicit(&y0, grid.dt(), &zero, &spec).unwrap();
            let want = linear_heat_step(&y0, grid.dt(), c, &zero);
            let err = got.iter().zip(&want).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-13, "c = {c}, err = {err}");
        }
        // Against the modal decay factor of the discrete Laplacian as well.
        let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
        let dt = 1e-4;
        let got = step_implicit(&y0, dt, &zero, &spec).unwrap();
        let dx = grid.dx();
        let lam = 4.0 / (dx * dx) * (PI * dx / 2.0).sin().powi(2);
        let factor = 1.0 / (1.0 + lam * dt);
        let err = got
            .iter()
            .zip(&y0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - factor * b).abs()));
        assert!(err < 1e-12);
        let continuum = 1.0 / (1.0 + PI * PI * dt);
        // Spatial truncation: |λ_h - π²| dt ≈ π⁴ dx² dt / 12.
        assert!((factor - continuum).abs() < 1e-5);
    }

    #[test]
    fn steady_state_of_unit_source() {
        let grid = Grid::new(31, 2, 1.0).unwrap();
        let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
        let f = grid.sample(|_| 1.0);
        let mut y = vec![0.0; grid.n_nodes()];
        for _ in 0..400 {
            y = step_implicit(&y, 0.05, &f, &spec).unwrap();
        }
        // The three-point stencil is exact for quadratics.
        let exact = grid.sample(|x| 0.5 * x * (1.0 - x));
        let err = y.iter().zip(&exact).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn nonlinear_newton_converges() {
        let spec = sine_spec();
        let grid = Grid::new(63, 40, 0.2).unwrap();
        let y0 = grid.sample(|x| 1.5 * (PI * x).sin() + 0.5 * (3.0 * PI * x).sin());
        let traj = solve_free(&y0, &grid, &spec).unwrap();
        assert!(traj.is_finite() && traj.has_zero_boundary());
        let mut prev = norms::linf(&y0);
        for k in 1..=grid.n_t() {
            let m = norms::linf(traj.level(k));
            assert!(m <= prev + 1e-12);
            prev = m;
        }
    }

    #[test]
    fn crank_nicolson_is_second_order_in_time() {
        let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
        let err_for = |n_t: usize| {
            let grid = Grid::new(255, n_t, 0.1).unwrap();
            let y0 = grid.sample(|x| (PI * x).sin());
            let f = SourceField::zeros(grid);
            let traj = solve_forward_with(&y0, &f, &grid, &spec, TimeScheme::CrankNicolson).unwrap();
            let dx = grid.dx();
            let lam = 4.0 / (dx * dx) * (PI * dx / 2.0).sin().powi(2);
            // Exact in time for the semi-discrete system.
            let exact = grid.sample(|x| (-lam * 0.1).exp() * (PI * x).sin());
            let diff: Vec<f64> = traj.terminal().iter().zip(&exact).map(|(a, b)| a - b).collect();
            norms::l2(&diff, dx)
        };
        let ratio = err_for(10) / err_for(20);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio = {ratio}");
    }

    #[test]
    fn rejects_nonzero_boundary_data() {
        let grid = Grid::new(7, 3, 1.0).unwrap();
        let spec = DiffusionSpec::constant(1.0, (-1.0, 1.0)).unwrap();
        let spike = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(solve_free(&spike, &grid, &spec).is_ok());
        let nonzero_boundary = vec![1.0; 9];
        assert!(matches!(
            solve_free(&nonzero_boundary, &grid, &spec),
            Err(Error::InvalidInput(_))
        ));
    }
}
