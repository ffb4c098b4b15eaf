//! Additive null control `y_t - (a(y) y_x)_x = 1_ω u` via penalized weighted control
//! problems, penalty continuation and Picard iteration on the frozen coefficient.

mod fixed_point;
mod lq;
mod schedule;
mod tune;

pub use fixed_point::{fixed_point_null_control, staged_control, FixedPointParams, NullControlResult, StagedResult};
pub use lq::{solve_lq_penalized, ContinuationStep, LqProblem, LqSolution, PenaltyParams, SYMMETRY_TOL};
pub use schedule::{cost_report, ControlSchedule, CostReport, KMembership};
pub use tune::{resolve_weights, tune_s_scale, SChoice, STrial, STuning, AUTO_TARGET_RATIO, S_LADDER};
