use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanWeights;
use crate::error::{Error, Result};
use crate::null_control::lq::{ContinuationStep, LqProblem, PenaltyParams};
use crate::null_control::schedule::{cost_report, ControlSchedule, CostReport};
use crate::pde::{norms, solve_forward, solve_free, DiffusionSpec, FrozenCoefficient, Grid, Interval, Trajectory};

/// Picard iteration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointParams {
    /// Threshold of the three `K`-membership checks (reported, not enforced).
    pub delta: f64,
    pub max_outer: usize,
    /// Relative `L²(Q_T)` gap between the quasilinear and the frozen-coefficient state.
    pub contraction_tol: f64,
    /// Largest admissible `||y0||_{H¹}`; `None` disables the gate.
    pub h1_gate: Option<f64>,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        Self {
            delta: 1.0,
            max_outer: 10,
            contraction_tol: 1e-6,
            h1_gate: Some(0.25),
        }
    }
}

impl FixedPointParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || self.max_outer == 0 || !(self.contraction_tol > 0.0) {
            return Err(Error::InvalidInput("need delta > 0, max_outer >= 1, contraction_tol > 0".into()));
        }
        if let Some(g) = self.h1_gate {
            if !(g > 0.0) {
                return Err(Error::InvalidInput("H1 gate must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of [`fixed_point_null_control`].
#[derive(Debug, Clone, PartialEq)]
pub struct NullControlResult {
    pub control: ControlSchedule,
    /// Quasilinear trajectory under `control`.
    pub state: Trajectory,
    pub report: CostReport,
    pub outer_iterations: usize,
    /// `||ỹ^{k+1} - y_lin^k|| / ||ỹ^{k+1}||` per outer iteration.
    pub consistency: Vec<f64>,
    /// `||ỹ^{k+1} - ỹ^k||` per outer iteration.
    pub step_distance: Vec<f64>,
    /// Continuation trace of the last outer iteration.
    pub continuation: Vec<ContinuationStep>,
    /// Terminal norm of the frozen-coefficient state of the last inner solve.
    pub linear_terminal_norm: f64,
}

/// Picard iteration over the frozen coefficient `a(ỹ)`, each step solving the penalized
/// problem over the continuation schedule. Returns the quasilinear run under the final control.
pub fn fixed_point_null_control(
    y0: &[f64],
    grid: &Grid,
    spec: &DiffusionSpec,
    w: &CarlemanWeights,
    omega: Interval,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
) -> Result<NullControlResult> {
    pp.validate()?;
    fp.validate()?;
    if w.grid() != grid {
        return Err(Error::InvalidInput("weights must live on the control grid".into()));
    }
    if let Some(gate) = fp.h1_gate {
        let h1 = norms::h1(y0, grid.dx());
        if h1 > gate {
            return Err(Error::SmallnessGateExceeded { h1, gate });
        }
    }
    let mut frozen_state = solve_free(y0, grid, spec)?;
    if y0.iter().all(|&v| v == 0.0) {
        let control = ControlSchedule::zeros(*grid, omega);
        let report = cost_report(&control, &frozen_state, y0, fp.delta)?;
        return Ok(NullControlResult {
            control,
            state: frozen_state,
            report,
            outer_iterations: 0,
            consistency: vec![],
            step_distance: vec![],
            continuation: vec![],
            linear_terminal_norm: 0.0,
        });
    }

    let mut consistency = Vec::new();
    let mut step_distance = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut increases = 0;
    for outer in 1..=fp.max_outer {
        let problem = LqProblem::new(FrozenCoefficient::from_state(spec, &frozen_state), w, omega)?;
        let (sol, trace) = problem.continuation(y0, pp, warm.as_deref())?;
        let state = solve_forward(y0, &sol.control.to_source(), grid, spec)?;
        let scale = norms::l2_space_time(&state).max(f64::MIN_POSITIVE);
        let gap = norms::l2_space_time_distance(&state, &sol.state) / scale;
        let step = norms::l2_space_time_distance(&state, &frozen_state);
        if let Some(&last) = step_distance.last() {
            increases = if step > last { increases + 1 } else { 0 };
        }
        consistency.push(gap);
        step_distance.push(step);
        if gap <= fp.contraction_tol {
            let report = cost_report(&sol.control, &state, y0, fp.delta)?;
            return Ok(NullControlResult {
                linear_terminal_norm: sol.terminal_norm(),
                control: sol.control,
                state,
                report,
                outer_iterations: outer,
                consistency,
                step_distance,
                continuation: trace,
            });
        }
        if increases >= 3 {
            return Err(Error::FixedPointDiverged {
                iterations: outer,
                distance: step,
            });
        }
        warm = Some(sol.q);
        frozen_state = state;
    }
    Err(Error::FixedPointDiverged {
        iterations: fp.max_outer,
        distance: *step_distance.last().unwrap_or(&f64::NAN),
    })
}

/// Free evolution on `(0, t0)` followed by [`fixed_point_null_control`] on `(t0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedResult {
    pub control: ControlSchedule,
    pub state: Trajectory,
    pub report: CostReport,
    pub start_level: usize,
    pub window: NullControlResult,
}

#[allow(clippy::too_many_arguments)]
pub fn staged_control(
    y0: &[f64],
    t0: f64,
    grid: &Grid,
    spec: &DiffusionSpec,
    w: &CarlemanWeights,
    omega: Interval,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
) -> Result<StagedResult> {
    let k0 = (t0 / grid.dt()).round() as usize;
    if !(t0 >= 0.0) || (k0 as f64 * grid.dt() - t0).abs() > 1e-9 * grid.horizon() {
        return Err(Error::InvalidInput(format!("t0 = {t0} is not a grid time")));
    }
    if k0 + 4 > grid.n_t() {
        return Err(Error::InvalidInput("control window needs at least four steps".into()));
    }
    // Grids need two steps; a one-step prefix is read off a two-step run.
    let prefix_steps = k0.max(2);
    let prefix = solve_free(y0, &grid.with_time(prefix_steps, grid.dt() * prefix_steps as f64)?, spec)?;
    let start = prefix.level(k0).to_vec();
    let window_grid = grid.with_time(grid.n_t() - k0, grid.horizon() - grid.t(k0))?;
    let window_weights = if k0 == 0 { w.clone() } else { w.for_grid(&window_grid)? };
    let window = fixed_point_null_control(&start, &window_grid, spec, &window_weights, omega, pp, fp)?;

    let control = window.control.embed(grid, k0)?;
    let mut state = Trajectory::zeros(*grid);
    for k in 0..=k0 {
        let level = prefix.level(k);
        state.level_mut(k).copy_from_slice(level);
    }
    for k in 0..window_grid.n_levels() {
        state.level_mut(k0 + k).copy_from_slice(window.state.level(k));
    }
    let report = cost_report(&control, &state, y0, fp.delta)?;
    Ok(StagedResult {
        control,
        state,
        report,
        start_level: k0,
        window,
    })
}
