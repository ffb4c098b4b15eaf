//! Choice of the Carleman parameter `s` used by the control solves.
//!
//! The weight `e^{2sβ} φ³` underflows for `s |β| ≳ 700`, and `|β| ~ 47 / (t (T - t))` at
//! the default `λ`, so useful values of `s` scale like `T²`. The auto mode scans
//! `s = c T²` over [`S_LADDER`] and keeps the largest `c` whose linearized penalized
//! solve still reaches the target terminal ratio.

use serde::{Deserialize, Serialize};

use crate::carleman::{build_weights, CarlemanWeights, PsiFunction};
use crate::error::{Error, Result};
use crate::null_control::lq::{LqProblem, PenaltyParams};
use crate::pde::{norms, FrozenCoefficient, Grid, Interval};

/// Candidate values of `s / T²`, increasing.
pub const S_LADDER: [f64; 8] = [3e-3, 5e-3, 1e-2, 1.5e-2, 2e-2, 3e-2, 5e-2, 1e-1];

/// Terminal ratio the auto mode asks of the linearized problem.
pub const AUTO_TARGET_RATIO: f64 = 1e-6;

/// How `s` is picked for a control window of length `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum SChoice {
    /// `s` as given.
    Fixed(f64),
    /// `s = c T²`.
    Scaled(f64),
    /// Tuned `c`, then `s = c T²`.
    #[default]
    Auto,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STrial {
    pub scale: f64,
    pub s: f64,
    /// `||y(T)|| / ||y0||` of the linearized solve, `None` when it failed.
    pub terminal_ratio: Option<f64>,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STuning {
    /// Selected `s / T²`.
    pub scale: f64,
    pub trials: Vec<STrial>,
}

/// Scans [`S_LADDER`] on the constant-coefficient problem `b ≡ coefficient`.
#[allow(clippy::too_many_arguments)]
pub fn tune_s_scale(
    psi: &PsiFunction,
    lambda: f64,
    grid: &Grid,
    coefficient: f64,
    y0: &[f64],
    omega: Interval,
    pp: &PenaltyParams,
    target_ratio: f64,
) -> Result<STuning> {
    let y0_norm = norms::l2(y0, grid.dx());
    let frozen = FrozenCoefficient::constant(*grid, coefficient)?;
    let mut trials = Vec::with_capacity(S_LADDER.len());
    if y0_norm == 0.0 {
        return Ok(STuning {
            scale: S_LADDER[S_LADDER.len() / 2],
            trials,
        });
    }
    let t2 = grid.horizon().powi(2);
    for &scale in &S_LADDER {
        let s = scale * t2;
        let w = build_weights(psi, lambda, s, grid)?;
        let problem = LqProblem::new(frozen.clone(), &w, omega)?;
        let trial = match problem.continuation(y0, pp, None) {
            Ok((sol, trace)) => STrial {
                scale,
                s,
                terminal_ratio: Some(sol.terminal_norm() / y0_norm),
                cg_iterations: trace.iter().map(|t| t.cg_iterations).sum(),
            },
            Err(Error::CgStalled { iterations, .. }) => STrial {
                scale,
                s,
                terminal_ratio: None,
                cg_iterations: iterations,
            },
            Err(e) => return Err(e),
        };
        trials.push(trial);
    }
    let passing = trials
        .iter()
        .filter(|t| t.terminal_ratio.is_some_and(|r| r <= target_ratio))
        .map(|t| t.scale)
        .next_back();
    let scale = match passing {
        Some(c) => c,
        None => trials
            .iter()
            .filter_map(|t| t.terminal_ratio.map(|r| (r, t.scale)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c)
            .ok_or(Error::CgStalled {
                iterations: pp.cg_max_iter,
                rel_residual: f64::NAN,
            })?,
    };
    Ok(STuning { scale, trials })
}

/// Resolves `choice` into weights on `grid`. `Auto` tunes against `coefficient` and `y0`.
#[allow(clippy::too_many_arguments)]
pub fn resolve_weights(
    choice: SChoice,
    psi: &PsiFunction,
    lambda: f64,
    grid: &Grid,
    coefficient: f64,
    y0: &[f64],
    omega: Interval,
    pp: &PenaltyParams,
) -> Result<(CarlemanWeights, Option<STuning>)> {
    let t2 = grid.horizon().powi(2);
    match choice {
        SChoice::Fixed(s) => Ok((build_weights(psi, lambda, s, grid)?, None)),
        SChoice::Scaled(c) => Ok((build_weights(psi, lambda, c * t2, grid)?, None)),
        SChoice::Auto => {
            let tuning = tune_s_scale(psi, lambda, grid, coefficient, y0, omega, pp, AUTO_TARGET_RATIO)?;
            Ok((build_weights(psi, lambda, tuning.scale * t2, grid)?, Some(tuning)))
        }
    }
}
