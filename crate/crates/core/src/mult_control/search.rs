//! Minimal-time search over the staged control class under `|u| <= σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mult_control::pipeline::{CarlemanSetup, MultPipelineResult, PipelineContext, PipelineParams, MIN_WINDOW_STEPS};
use crate::mult_control::reaction::ReactionSpec;
use crate::null_control::{ControlSchedule, FixedPointParams, PenaltyParams};
use crate::pde::{norms, DiffusionSpec, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeOptimalParams {
    pub sigma: f64,
    pub t_hi: f64,
    pub bisect_tol: f64,
    /// `||y(T)||_{L²}` at or below this counts as reaching zero.
    pub terminal_tol: f64,
}

impl TimeOptimalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.bisect_tol > 0.0) || !(self.t_hi > 0.0) || !(self.terminal_tol > 0.0) {
            return Err(Error::InvalidInput("σ, T_hi, bisect_tol and terminal_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleReport {
    pub admissible: bool,
    pub linf_u: f64,
    pub terminal_norm: f64,
}

/// `||u||_∞ <= σ` and `||y(T)||_{L²} <= terminal_tol`.
pub fn admissible_check(u: &ControlSchedule, y_terminal: &[f64], top: &TimeOptimalParams) -> AdmissibleReport {
    let linf_u = u.linf();
    let terminal_norm = norms::l2(y_terminal, u.grid().dx());
    AdmissibleReport {
        admissible: linf_u <= top.sigma && terminal_norm <= top.terminal_tol,
        linf_u,
        terminal_norm,
    }
}

/// Waiting time as a fraction of the steps left after phase 1.
pub const WAIT_FRACTIONS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub t2: f64,
    pub t3: f64,
    pub linf_u: Option<f64>,
    pub terminal_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub horizon: f64,
    pub steps: usize,
    pub feasible: bool,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub sigma: f64,
    /// Smallest feasible horizon found, within `bisect_tol`, for the staged control class.
    pub t_star: f64,
    pub dt: f64,
    /// Feasible run at `t_star` (`None` when `y0 = 0`).
    pub feasible_run: Option<MultPipelineResult>,
    /// Attempt at `t_star - bisect_tol` (`None` when that horizon is not positive).
    pub below_record: Option<TrialRecord>,
    /// The attempt below `t_star` turned out feasible: feasibility is not monotone here.
    pub anomaly: bool,
    pub trials: Vec<TrialRecord>,
}

/// Bisection on the total horizon, using steps of `dt = T_hi / params.n_ctrl`.
///
/// Each trial horizon `K dt` keeps the phase-1 prefix and tries the waiting fractions
/// [`WAIT_FRACTIONS`] of the remaining steps; it is feasible when any candidate passes
/// [`admissible_check`].
#[allow(clippy::too_many_arguments)]
pub fn time_optimal_search(
    y0: &[f64],
    spec: &DiffusionSpec,
    rs: &ReactionSpec,
    omega: Interval,
    setup: &CarlemanSetup,
    pp: &PenaltyParams,
    fp: &FixedPointParams,
    params: &PipelineParams,
    top: &TimeOptimalParams,
) -> Result<SearchOutcome> {
    top.validate()?;
    let grid_params = PipelineParams {
        t3: top.t_hi,
        ..params.clone()
    };
    let mut ctx = PipelineContext::new(y0, spec, rs, omega, setup, pp, fp, &grid_params)?;
    let dt = ctx.dt();
    if ctx.y0_is_zero() {
        return Ok(SearchOutcome {
            sigma: top.sigma,
            t_star: 0.0,
            dt,
            feasible_run: None,
            below_record: None,
            anomaly: false,
            trials: vec![],
        });
    }
    let k_hi = params.n_ctrl;
    let tol_steps = ((top.bisect_tol / dt).ceil() as usize).max(1);
    let mut trials = Vec::new();

    let (hi_record, hi_run) = trial(&mut ctx, k_hi, top);
    let hi_feasible = hi_record.feasible;
    trials.push(hi_record);
    let mut best_run = match (hi_feasible, hi_run) {
        (true, Some(run)) => run,
        _ => {
            return Err(Error::InfeasibleAtHi {
                t_hi: top.t_hi,
                reason: describe(trials.last().expect("recorded")),
            })
        }
    };

    let mut lo = ctx.k1();
    let mut hi = k_hi;
    while hi - lo > tol_steps {
        let mid = lo + (hi - lo) / 2;
        let (record, run) = trial(&mut ctx, mid, top);
        let feasible = record.feasible;
        trials.push(record);
        match (feasible, run) {
            (true, Some(run)) => {
                hi = mid;
                best_run = run;
            }
            _ => lo = mid,
        }
    }

    let below_record = if hi > tol_steps {
        let (record, _) = trial(&mut ctx, hi - tol_steps, top);
        Some(record)
    } else {
        None
    };
    let anomaly = below_record.as_ref().is_some_and(|r| r.feasible);
    Ok(SearchOutcome {
        sigma: top.sigma,
        t_star: hi as f64 * dt,
        dt,
        feasible_run: Some(best_run),
        below_record,
        anomaly,
        trials,
    })
}

fn describe(record: &TrialRecord) -> String {
    let mut parts = Vec::new();
    for c in &record.candidates {
        match (&c.error, c.linf_u, c.terminal_norm) {
            (Some(e), _, _) => parts.push(format!("t2={:.4}: {e}", c.t2)),
            (None, Some(u), Some(y)) => parts.push(format!("t2={:.4}: |u|={u:.3e}, |y(T)|={y:.3e}", c.t2)),
            _ => {}
        }
    }
    if parts.is_empty() {
        "no admissible window fits".into()
    } else {
        parts.join("; ")
    }
}

/// Runs every waiting fraction at horizon `steps * dt`; returns the feasible run with the
/// smallest `||u||_∞`, if any.
fn trial(ctx: &mut PipelineContext<'_>, steps: usize, top: &TimeOptimalParams) -> (TrialRecord, Option<MultPipelineResult>) {
    let dt = ctx.dt();
    let mut record = TrialRecord {
        horizon: steps as f64 * dt,
        steps,
        feasible: false,
        candidates: Vec::new(),
    };
    let mut best: Option<MultPipelineResult> = None;
    let remaining = steps.saturating_sub(ctx.k1());
    let mut seen = Vec::new();
    for frac in WAIT_FRACTIONS {
        let k2 = (frac * remaining as f64).floor() as usize;
        let n_ctrl = remaining - k2;
        if n_ctrl < MIN_WINDOW_STEPS || seen.contains(&k2) {
            continue;
        }
        seen.push(k2);
        match ctx.run_fixed(k2, n_ctrl) {
            Ok(run) => {
                let report = admissible_check(&run.control, run.state.terminal(), top);
                record.candidates.push(CandidateRecord {
                    t2: run.t2,
                    t3: run.t3,
                    linf_u: Some(report.linf_u),
                    terminal_norm: Some(report.terminal_norm),
                    error: None,
                });
                if report.admissible && best.as_ref().is_none_or(|b| run.linf_u < b.linf_u) {
                    best = Some(run);
                }
            }
            Err(e) => record.candidates.push(CandidateRecord {
                t2: k2 as f64 * dt,
                t3: n_ctrl as f64 * dt,
                linf_u: None,
                terminal_norm: None,
                error: Some(e.to_string()),
            }),
        }
    }
    record.feasible = best.is_some();
    (record, best)
}
