//! Penalized weighted null control of the frozen-coefficient equation.
//!
//! Minimizes `J(u) = ∬ e^{-2sβ} φ^{-3} u² + ε^{-1} ||y(T)||²`. The minimizer is
//! `u = 1_ω W p` with `W = e^{2sβ} φ³` and `p` the adjoint state with terminal value
//! `q = -y(T)/ε`. Writing `Λq = y_u(T)` for the state driven from zero by `u = 1_ω W p[q]`,
//! `q` solves `(Λ + ε) q = -y_free(T)`, an SPD system of dimension `n_x` handled by CG.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::carleman::{weighted_control_norm, CarlemanWeights};
use crate::error::{Error, Result};
use crate::null_control::schedule::ControlSchedule;
use crate::pde::{norms, FrozenCoefficient, Interval, SourceField, SpaceTimeField, Trajectory};
use crate::rng::seeded;

/// Penalty continuation and CG controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyParams {
    pub eps_schedule: Vec<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            eps_schedule: (1..=8).map(|k| 10f64.powi(-k)).collect(),
            cg_tol: 1e-9,
            cg_max_iter: 2000,
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidInput("penalty values must be positive".into()));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("penalty schedule must be strictly decreasing".into()));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(Error::InvalidInput("CG tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn final_eps(&self) -> f64 {
        *self.eps_schedule.last().expect("validated schedule")
    }
}

/// Relative symmetry defect above which `Λ` is reported as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Consistent triple `(u, y, p)` of one penalized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    pub control: ControlSchedule,
    /// Linear frozen-coefficient state under `control`.
    pub state: Trajectory,
    /// Adjoint with terminal value `q`.
    pub adjoint: Trajectory,
    pub q: Vec<f64>,
    pub eps: f64,
    pub cg_iterations: usize,
    pub rel_residual: f64,
}

impl LqSolution {
    pub fn terminal_norm(&self) -> f64 {
        norms::l2(self.state.terminal(), self.state.grid().dx())
    }
}

/// Per-penalty record of a continuation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub eps: f64,
    pub terminal_norm: f64,
    pub cg_iterations: usize,
    pub rel_residual: f64,
}

/// Operator `q ↦ Λq` for a frozen coefficient, weights and observation set.
#[derive(Debug, Clone)]
pub struct LqProblem {
    frozen: FrozenCoefficient,
    omega: Interval,
    /// `1_ω e^{2sβ} φ³`.
    gain: SpaceTimeField,
    weights: CarlemanWeights,
}

impl LqProblem {
    pub fn new(frozen: FrozenCoefficient, weights: &CarlemanWeights, omega: Interval) -> Result<Self> {
        let grid = *frozen.grid();
        if weights.grid() != &grid {
            return Err(Error::InvalidInput("weights and coefficient live on different grids".into()));
        }
        let mask = omega.mask(&grid);
        let mut gain = weights.control_weight();
        for k in 0..grid.n_levels() {
            for (g, m) in gain.level_mut(k).iter_mut().zip(&mask) {
                *g *= m;
            }
        }
        Ok(Self {
            frozen,
            omega,
            gain,
            weights: weights.clone(),
        })
    }

    /// From a nodal coefficient field `b`.
    pub fn from_nodal(b: &SourceField, weights: &CarlemanWeights, omega: Interval) -> Result<Self> {
        Self::new(FrozenCoefficient::from_nodal(b)?, weights, omega)
    }

    pub fn frozen(&self) -> &FrozenCoefficient {
        &self.frozen
    }

    pub fn weights(&self) -> &CarlemanWeights {
        &self.weights
    }

    pub fn omega(&self) -> Interval {
        self.omega
    }

    fn dx(&self) -> f64 {
        self.frozen.grid().dx()
    }

    /// `u = 1_ω W p[q]` together with `p[q]`.
    pub fn control_from_terminal(&self, q: &[f64]) -> Result<(ControlSchedule, Trajectory)> {
        let p = self.frozen.solve_adjoint(q, None)?;
        let grid = *self.frozen.grid();
        let mut u = SpaceTimeField::zeros(grid);
        for k in 1..grid.n_t() {
            let (pk, gk) = (p.level(k), self.gain.level(k));
            for (i, v) in u.level_mut(k).iter_mut().enumerate() {
                *v = gk[i] * pk[i];
            }
        }
        Ok((ControlSchedule::projected(u, self.omega, 0.0), p))
    }

    /// `Λq`.
    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        let (u, _) = self.control_from_terminal(q)?;
        self.frozen.terminal_state(&vec![0.0; q.len()], &u.to_source())
    }

    /// `y(T)` of the uncontrolled frozen dynamics.
    pub fn free_terminal(&self, y0: &[f64]) -> Result<Vec<f64>> {
        self.frozen.terminal_state(y0, &SourceField::zeros(*self.frozen.grid()))
    }

    /// Relative defect `|<Λq1, q2> - <q1, Λq2>| / (||q1|| ||q2||)` on two seeded random vectors.
    pub fn symmetry_defect(&self, seed: u64) -> Result<f64> {
        let n = self.frozen.grid().n_nodes();
        let mut rng = seeded(seed);
        let mut draw = || -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            v[0] = 0.0;
            v[n - 1] = 0.0;
            v
        };
        let (q1, q2) = (draw(), draw());
        let dx = self.dx();
        let lhs = norms::inner(&self.apply(&q1)?, &q2, dx);
        let rhs = norms::inner(&q1, &self.apply(&q2)?, dx);
        Ok((lhs - rhs).abs() / (norms::l2(&q1, dx) * norms::l2(&q2, dx)))
    }

    /// Runs the symmetry self-test and fails with [`Error::NonSymmetric`] above tolerance.
    pub fn check_symmetry(&self) -> Result<f64> {
        let defect = self.symmetry_defect(0x5eed)?;
        if !(defect <= SYMMETRY_TOL) {
            return Err(Error::NonSymmetric { defect });
        }
        Ok(defect)
    }

    /// One penalized solve, warm-started from `warm` when given.
    pub fn solve(&self, y0: &[f64], eps: f64, warm: Option<&[f64]>, params: &PenaltyParams) -> Result<LqSolution> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("penalty must be positive".into()));
        }
        let grid = *self.frozen.grid();
        let n = grid.n_nodes();
        if y0.len() != n || y0[0] != 0.0 || y0[n - 1] != 0.0 {
            return Err(Error::InvalidInput("y0 must match the grid and vanish at the boundary".into()));
        }
        let rhs: Vec<f64> = self.free_terminal(y0)?.iter().map(|v| -v).collect();
        let outcome = if rhs.iter().all(|&v| v == 0.0) {
            CgOutcome {
                x: vec![0.0; n],
                iterations: 0,
                rel_residual: 0.0,
                converged: true,
            }
        } else {
            let start = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; n]);
            conjugate_gradient(|v| self.shifted(v, eps), &rhs, start, self.dx(), params.cg_tol, params.cg_max_iter)?
        };
        if !outcome.converged {
            return Err(Error::CgStalled {
                iterations: outcome.iterations,
                rel_residual: outcome.rel_residual,
            });
        }
        let (control, adjoint) = self.control_from_terminal(&outcome.x)?;
        let state = self.frozen.solve_forward(y0, &control.to_source())?;
        Ok(LqSolution {
            control,
            state,
            adjoint,
            q: outcome.x,
            eps,
            cg_iterations: outcome.iterations,
            rel_residual: outcome.rel_residual,
        })
    }

    fn shifted(&self, v: &[f64], eps: f64) -> Result<Vec<f64>> {
        let mut out = self.apply(v)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += eps * x;
        }
        Ok(out)
    }

    /// Warm-started continuation over `params.eps_schedule`, after the symmetry self-test.
    pub fn continuation(
        &self,
        y0: &[f64],
        params: &PenaltyParams,
        warm: Option<&[f64]>,
    ) -> Result<(LqSolution, Vec<ContinuationStep>)> {
        params.validate()?;
        self.check_symmetry()?;
        let mut trace = Vec::with_capacity(params.eps_schedule.len());
        let mut current: Option<LqSolution> = None;
        for &eps in &params.eps_schedule {
            let start = current.as_ref().map(|s| s.q.as_slice()).or(warm);
            let sol = self.solve(y0, eps, start, params)?;
            trace.push(ContinuationStep {
                eps,
                terminal_norm: sol.terminal_norm(),
                cg_iterations: sol.cg_iterations,
                rel_residual: sol.rel_residual,
            });
            current = Some(sol);
        }
        Ok((current.expect("non-empty schedule"), trace))
    }

    /// `J(u) = ∬ e^{-2sβ} φ^{-3} u² + ||y_u(T)||² / ε`.
    pub fn objective(&self, y0: &[f64], u: &ControlSchedule, eps: f64) -> Result<f64> {
        let y_t = self.frozen.terminal_state(y0, &u.to_source())?;
        Ok(weighted_control_norm(u.values(), &self.weights)? + norms::l2_sq(&y_t, self.dx()) / eps)
    }

    /// Gradient of [`LqProblem::objective`] with respect to the pairing `dt dx Σ u v`:
    /// `2 e^{-2sβ} φ^{-3} u + (2/ε) 1_ω p̃`, where `p̃` is the adjoint with terminal `y_u(T)`.
    pub fn gradient(&self, y0: &[f64], u: &ControlSchedule, eps: f64) -> Result<SpaceTimeField> {
        let grid = *self.frozen.grid();
        let y_t = self.frozen.terminal_state(y0, &u.to_source())?;
        let p = self.frozen.solve_adjoint(&y_t, None)?;
        let mask = self.omega.mask(&grid);
        let log_w = self.weights.log_control_weight();
        let mut g = SpaceTimeField::zeros(grid);
        for k in 1..grid.n_t() {
            for (i, &m) in mask.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let uv = u.values().get(k, i);
                let penalty = if uv != 0.0 { 2.0 * uv * (-log_w.get(k, i)).exp() } else { 0.0 };
                g.level_mut(k)[i] = penalty + 2.0 / eps * p.get(k, i);
            }
        }
        Ok(g)
    }
}

/// Convenience wrapper: one penalized solve for the nodal coefficient `b`.
pub fn solve_lq_penalized(
    b: &SourceField,
    y0: &[f64],
    w: &CarlemanWeights,
    eps: f64,
    omega: Interval,
    params: &PenaltyParams,
) -> Result<LqSolution> {
    let problem = LqProblem::from_nodal(b, w, omega)?;
    problem.check_symmetry()?;
    problem.solve(y0, eps, None, params)
}

struct CgOutcome {
    x: Vec<f64>,
    iterations: usize,
    rel_residual: f64,
    converged: bool,
}

/// Iterations without improving the best residual before declaring a plateau.
const PLATEAU: usize = 200;

fn conjugate_gradient<A>(apply: A, b: &[f64], mut x: Vec<f64>, dx: f64, tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let dot = |u: &[f64], v: &[f64]| norms::inner(u, v, dx);
    let b_norm = dot(b, b).sqrt();
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let ax = apply(x)?;
        Ok(b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect())
    };
    let mut r = residual(&x)?;
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut best = (rs.sqrt() / b_norm, x.clone());
    let mut since_best = 0;
    let mut iterations = 0;
    while iterations < max_iter {
        let rel = rs.sqrt() / b_norm;
        if rel < best.0 {
            best = (rel, x.clone());
            since_best = 0;
        }
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations,
                rel_residual: rel,
                converged: true,
            });
        }
        if since_best > PLATEAU {
            break;
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rs / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        since_best += 1;
        if iterations % 50 == 0 {
            r = residual(&x)?;
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    let rel = rs.sqrt() / b_norm;
    let (best_rel, best_x) = if rel < best.0 { (rel, x) } else { best };
    Ok(CgOutcome {
        x: best_x,
        iterations,
        rel_residual: best_rel,
        converged: best_rel <= tol,
    })
}
