//! Three-phase multiplicative controller: free decay until the `L^∞` gate, further free
//! waiting, then an additive null control converted into a multiplicative one.

use serde::{Deserialize, Serialize};

use crate::carleman::PsiFunction;
use crate::error::{Error, Result};
use crate::estimates::{smallness_gate, t1_theory, GnConstant};
use crate::mult_control::reaction::{synthesize_multiplicative, ReactionSpec, Synthesis};
use crate::null_control::{
    fixed_point_null_control, resolve_weights, ControlSchedule, CostReport, FixedPointParams, NullControlResult,
    PenaltyParams, SChoice, STuning,
};
use crate::pde::{norms, solve_forward_feedback, step_implicit, DiffusionSpec, Grid, Interval, TimeScheme, Trajectory};

/// Fewest steps in a control window.
pub const MIN_WINDOW_STEPS: usize = 8;

/// Cap on phase-1 steps when neither the gate nor the theoretical time is reached.
const MAX_PHASE1_STEPS: usize = 1_000_000;

/// `ψ`, `λ` and the rule for `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanSetup {
    pub psi: PsiFunction,
    pub lambda: f64,
    pub s: SChoice,
}

impl CarlemanSetup {
    /// `λ = 2 / ||ψ||` with the given rule for `s`.
    pub fn minimal(psi: PsiFunction, s: SChoice) -> Self {
        let lambda = 2.0 / psi.sup_norm();
        Self { psi, lambda, s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub n_x: usize,
    /// Steps in the control window; also fixes `dt = t3 / n_ctrl` for the whole run.
    pub n_ctrl: usize,
    pub t3: f64,
    /// First waiting time tried in phase 2.
    pub t2_init: f64,
    pub max_doublings: usize,
    /// Required `||y(T)|| / ||y0||` of the additive window solve.
    pub terminal_rel_tol: f64,
    pub c0: GnConstant,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            n_x: 64,
            n_ctrl: 128,
            t3: 0.2,
            t2_init: 0.05,
            max_doublings: 20,
            terminal_rel_tol: 1e-4,
            c0: GnConstant::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_x < 3 || self.n_ctrl < MIN_WINDOW_STEPS {
            return Err(Error::InvalidInput(format!(
                "need n_x >= 3 and n_ctrl >= {MIN_WINDOW_STEPS}"
            )));
        }
        if !(self.t3 > 0.0) || !(self.t2_init > 0.0) || !(self.terminal_rel_tol > 0.0) {
            return Err(Error::InvalidInput("t3, t2_init and terminal_rel_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t3 / self.n_ctrl as f64
    }
}

/// One phase-2 attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitAttempt {
    pub t2: f64,
    pub success: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultPipelineResult {
    pub grid: Grid,
    pub t1: f64,
    pub t1_theory: f64,
    pub t1_observed: Option<f64>,
    pub t2: f64,
    pub t3: f64,
    /// Multiplicative schedule on the full grid.
    pub control: ControlSchedule,
    /// Closed-loop run with the multiplicative source.
    pub state: Trajectory,
    /// Free prefix followed by the additively controlled window.
    pub additive_state: Trajectory,
    pub additive_control: ControlSchedule,
    pub terminal_norm: f64,
    pub y0_norm: f64,
    pub min_denominator: f64,
    pub g_linf: f64,
    pub linf_u: f64,
    /// `||state - additive_state||_{L²(Q_T)}`.
    pub identification_error: f64,
    pub s: f64,
    pub tuning: Option<STuning>,
    pub window_report: CostReport,
    pub outer_iterations: usize,
    pub attempts: Vec<WaitAttempt>,
}

impl MultPipelineResult {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn control_start(&self) -> f64 {
        self.t1 + self.t2
    }
}

struct WindowRun {
    start: usize,
    weights_s: f64,
    null: NullControlResult,
    synthesis: Synthesis,
}

/// Shared state for runs with a common `dt`: the free prefix and the tuned `s / T²`.
pub(crate) struct PipelineContext<'a> {
    y0: Vec<f64>,
    spec: &'a DiffusionSpec,
    rs: &'a ReactionSpec,
    omega: Interval,
    setup: &'a CarlemanSetup,
    pp: &'a PenaltyParams,
    fp: FixedPointParams,
    n_x: usize,
    dt: f64,
    terminal_tol: f64,
    prefix: Vec<Vec<f64>>,
    k1: usize,
    t1_observed: Option<f64>,
    t1_theory: f64,
    scale: Option<f64>,
    tuning: Option<STuning>,
}

impl<'a> PipelineContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        y0: &[f64],
        spec: &'a DiffusionSpec,
        rs: &'a ReactionSpec,
        omega: Interval,
        setup: &'a CarlemanSetup,
        pp: &'a PenaltyParams,
        fp: &FixedPointParams,
        params: &PipelineParams,
    ) -> Result<Self> {
        params.validate()?;
        pp.validate()?;
        fp.validate()?;
        let n_x = params.n_x;
        if y0.len() != n_x + 2 || y0[0] != 0.0 || y0[n_x + 1] != 0.0 || y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("y0 must be finite, on the n_x grid, and vanish at the boundary".into()));
        }
        let dt = params.dt();
        let y0_norm = norms::l2(y0, 1.0 / (n_x + 1) as f64);
        let mut ctx = Self {
            y0: y0.to_vec(),
            spec,
            rs,
            omega,
            setup,
            pp,
            fp: FixedPointParams {
                h1_gate: None,
                ..fp.clone()
            },
            n_x,
            dt,
            terminal_tol: params.terminal_rel_tol * y0_norm,
            prefix: vec![y0.to_vec()],
            k1: 0,
            t1_observed: None,
            t1_theory: t1_theory(spec, params.c0),
            scale: None,
            tuning: None,
        };
        ctx.phase_one(params.c0)?;
        Ok(ctx)
    }

    fn phase_one(&mut self, c0: GnConstant) -> Result<()> {
        let gate = smallness_gate(self.spec, c0);
        let theory_steps = (self.t1_theory / self.dt).ceil();
        let cap = if theory_steps.is_finite() {
            (theory_steps as usize).min(MAX_PHASE1_STEPS)
        } else {
            MAX_PHASE1_STEPS
        };
        let mut k = 0;
        loop {
            if norms::linf(&self.prefix[k]) <= gate {
                self.t1_observed = Some(k as f64 * self.dt);
                break;
            }
            if k >= cap {
                if cap == MAX_PHASE1_STEPS && (theory_steps as usize) > cap {
                    return Err(Error::HorizonTooShort(format!(
                        "L^inf gate {gate:.3e} not reached in {cap} steps"
                    )));
                }
                break;
            }
            self.extend(k + 1)?;
            k += 1;
        }
        self.k1 = k;
        Ok(())
    }

    fn extend(&mut self, level: usize) -> Result<()> {
        let n = self.n_x + 2;
        while self.prefix.len() <= level {
            let k = self.prefix.len();
            let next = step_implicit(&self.prefix[k - 1], self.dt, &vec![0.0; n], self.spec).map_err(|e| match e {
                Error::SolverDiverged { residual, .. } => Error::SolverDiverged {
                    time_index: Some(k),
                    residual,
                },
                other => other,
            })?;
            self.prefix.push(next);
        }
        Ok(())
    }

    pub(crate) fn k1(&self) -> usize {
        self.k1
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn y0_is_zero(&self) -> bool {
        self.y0.iter().all(|&v| v == 0.0)
    }

    fn run_window(&mut self, k2: usize, n_ctrl: usize) -> Result<WindowRun> {
        let start = self.k1 + k2;
        self.extend(start)?;
        let z = self.prefix[start].clone();
        let window = Grid::new(self.n_x, n_ctrl, n_ctrl as f64 * self.dt)?;
        let t_offset = start as f64 * self.dt;
        self.rs.check_theta(&window, self.omega, t_offset)?;
        let choice = match (self.setup.s, self.scale) {
            (SChoice::Auto, Some(c)) => SChoice::Scaled(c),
            (other, _) => other,
        };
        let (weights, tuning) = resolve_weights(
            choice,
            &self.setup.psi,
            self.setup.lambda,
            &window,
            self.spec.a(0.0),
            &z,
            self.omega,
            self.pp,
        )?;
        if let Some(t) = tuning {
            self.scale = Some(t.scale);
            self.tuning = Some(t);
        }
        let null = fixed_point_null_control(&z, &window, self.spec, &weights, self.omega, self.pp, &self.fp)?;
        if null.report.terminal_norm > self.terminal_tol && !self.y0_is_zero() {
            return Err(Error::ConstructionFailed(format!(
                "window terminal norm {:.3e} above {:.3e}",
                null.report.terminal_norm, self.terminal_tol
            )));
        }
        let synthesis = synthesize_multiplicative(&null.control, &null.state, self.rs, t_offset)?;
        Ok(WindowRun {
            start,
            weights_s: weights.s(),
            null,
            synthesis,
        })
    }

    fn assemble(&self, run: WindowRun, attempts: Vec<WaitAttempt>) -> Result<MultPipelineResult> {
        let n_ctrl = run.null.state.grid().n_t();
        let n_t = run.start + n_ctrl;
        let grid = Grid::new(self.n_x, n_t, n_t as f64 * self.dt)?;
        let mut additive_state = Trajectory::zeros(grid);
        for k in 0..=run.start {
            additive_state.level_mut(k).copy_from_slice(&self.prefix[k]);
        }
        for k in 0..=n_ctrl {
            additive_state.level_mut(run.start + k).copy_from_slice(run.null.state.level(k));
        }
        let additive_control = run.null.control.embed(&grid, run.start)?;
        let control = run.synthesis.control.embed(&grid, run.start)?;

        let rs = self.rs;
        let xs = grid.xs();
        let u = control.values();
        let state = solve_forward_feedback(&self.y0, &grid, self.spec, TimeScheme::BackwardEuler, |k, yk| {
            let t = grid.t(k);
            u.level(k)
                .iter()
                .zip(yk)
                .zip(&xs)
                .map(|((&uk, &y), &x)| if uk == 0.0 { 0.0 } else { uk * (rs.g(y) - rs.theta(x, t)) })
                .collect()
        })?;
        let terminal_norm = norms::l2(state.terminal(), grid.dx());
        Ok(MultPipelineResult {
            t1: self.k1 as f64 * self.dt,
            t1_theory: self.t1_theory,
            t1_observed: self.t1_observed,
            t2: (run.start - self.k1) as f64 * self.dt,
            t3: n_ctrl as f64 * self.dt,
            identification_error: norms::l2_space_time_distance(&state, &additive_state),
            linf_u: control.linf(),
            min_denominator: run.synthesis.min_denominator,
            g_linf: run.synthesis.g_linf,
            y0_norm: norms::l2(&self.y0, grid.dx()),
            terminal_norm,
            s: run.weights_s,
            tuning: self.tuning.clone(),
            window_report: run.null.report.clone(),
            outer_iterations: run.null.outer_iterations,
            attempts,
            grid,
            control,
            state,
            additive_state,
            additive_control,
        })
    }

    /// Fixed waiting time of `k2` steps and a window of `n_ctrl` steps.
    pub(crate) fn run_fixed(&mut self, k2: usize, n_ctrl: usize) -> Result<MultPipelineResult> {
        let run = self.run_window(k2, n_ctrl)?;
        let attempt = WaitAttempt {
            t2: k2 as f64 * self.dt,
            success: true,
            reason: None,
        };
        self.assemble(run, vec![attempt])
    }

    /// Doubles the waiting time from `k2_init` steps until the window succeeds.
    pub(crate) fn run_adaptive(&mut self, k2_init: usize, n_ctrl: usize, max_doublings: usize) -> Result<MultPipelineResult> {
        let mut k2 = k2_init.max(1);
        let mut attempts = Vec::new();
        for doubling in 0..=max_doublings {
            match self.run_window(k2, n_ctrl) {
                Ok(run) => {
                    attempts.push(WaitAttempt {
                        t2: k2 as f64 * self.dt,
                        success: true,
                        reason: None,
                    });
                    return self.assemble(run, attempts);
                }
                Err(e) => {
                    attempts.push(WaitAttempt {
                        t2: k2 as f64 * self.dt,
                        success: false,
                        reason: Some(e.to_string()),
                    });
                    if doubling == max_doublings {
                        return Err(Error::AdaptiveWaitExhausted {
                            doublings: max_doublings,
                            last_t2: k2 as f64 * self.dt,
                            reason: e.to_string(),
                        });
                    }
                }
            }
            k2 *= 2;
        }
        unreachable!("loop returns on its last iteration")
    }
}

fn wait_steps(t2: f64, dt: f64) -> usize {
    ((t2 / dt).round() as usize).max(1)
}

/// Phase 1 for `min(t1_theory, t1_observed)`, phase 2 doubling `t2` from `params.t2_init`
/// until the window control converges with the terminal and safeguard checks met, then
/// phase 3 and a closed-loop resimulation of the whole horizon.
#[allow(clippy::too_many_arguments)]
pub fn multiplicative_pipeline(
    y0: &[f64],
    spec: &DiffusionSpec,
    rs: &ReactionSpec,
    omega: Interval,
    setup: &CarlemanSetup,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
    params: &PipelineParams,
) -> Result<MultPipelineResult> {
    let mut ctx = PipelineContext::new(y0, spec, rs, omega, setup, pp, fp, params)?;
    let k2 = wait_steps(params.t2_init, params.dt());
    ctx.run_adaptive(k2, params.n_ctrl, params.max_doublings)
}

/// Same pipeline with a prescribed waiting time `t2` (rounded to the grid).
#[allow(clippy::too_many_arguments)]
pub fn pipeline_with_wait(
    y0: &[f64],
    spec: &DiffusionSpec,
    rs: &ReactionSpec,
    omega: Interval,
    setup: &CarlemanSetup,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
    params: &PipelineParams,
    t2: f64,
) -> Result<MultPipelineResult> {
    let mut ctx = PipelineContext::new(y0, spec, rs, omega, setup, pp, fp, params)?;
    let steps = wait_steps(t2, params.dt());
    ctx.run_fixed(steps, params.n_ctrl)
}

/// First adaptive success followed by runs with `2^j t2*`, `j = 1..=extra`, sharing the
/// prefix and the tuned `s`.
#[allow(clippy::too_many_arguments)]
pub fn wait_refinement(
    y0: &[f64],
    spec: &DiffusionSpec,
    rs: &ReactionSpec,
    omega: Interval,
    setup: &CarlemanSetup,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
    params: &PipelineParams,
    extra: usize,
) -> Result<Vec<MultPipelineResult>> {
    let mut ctx = PipelineContext::new(y0, spec, rs, omega, setup, pp, fp, params)?;
    let first = ctx.run_adaptive(wait_steps(params.t2_init, params.dt()), params.n_ctrl, params.max_doublings)?;
    let base = (first.t2 / params.dt()).round() as usize;
    let mut runs = vec![first];
    for j in 1..=extra {
        runs.push(ctx.run_fixed(base << j, params.n_ctrl)?);
    }
    Ok(runs)
}
