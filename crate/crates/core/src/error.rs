use thiserror::Error;

/// Failures raised by the solvers, diagnostics and control engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("diffusion coefficient rejected: min a = {min_a} at s = {at} (uniform parabolicity requires a > 0)")]
    RejectedCoefficient { min_a: f64, at: f64 },

    #[error("Newton iteration did not converge (time index {time_index:?}, residual {residual:.3e})")]
    SolverDiverged {
        time_index: Option<usize>,
        residual: f64,
    },

    #[error("inverse of the Kirchhoff map failed: z = {z} lies outside [{lo}, {hi}]")]
    InverseLookupFailure { z: f64, lo: f64, hi: f64 },

    #[error("coefficient is not uniformly elliptic: min b = {min_b}")]
    NonellipticCoefficient { min_b: f64 },

    #[error("smallness gate never active within the horizon (min ||y||_inf = {min_linf:.3e}, gate {gate:.3e})")]
    GateNeverActive { min_linf: f64, gate: f64 },

    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    #[error("construction of psi failed: {0}")]
    ConstructionFailed(String),

    #[error("parameter rejected: {0}")]
    ParameterRejected(String),

    #[error("conjugate gradient stalled after {iterations} iterations at relative residual {rel_residual:.3e}")]
    CgStalled {
        iterations: usize,
        rel_residual: f64,
    },

    #[error("control Gramian failed the symmetry self-test (relative defect {defect:.3e})")]
    NonSymmetric { defect: f64 },

    #[error("fixed-point iteration diverged after {iterations} outer iterations (distance {distance:.3e})")]
    FixedPointDiverged { iterations: usize, distance: f64 },

    #[error("initial state too large for direct control: ||y0||_H1 = {h1:.3e} > gate {gate:.3e}")]
    SmallnessGateExceeded { h1: f64, gate: f64 },

    #[error("safeguard violated at (x = {x:.4}, t = {t:.4}): |g(Y)| = {g_abs:.4e} > theta0/2 = {limit:.4e}")]
    SafeguardViolated {
        x: f64,
        t: f64,
        g_abs: f64,
        limit: f64,
    },

    #[error("adaptive waiting exhausted after {doublings} doublings (last t2 = {last_t2}): {reason}")]
    AdaptiveWaitExhausted {
        doublings: usize,
        last_t2: f64,
        reason: String,
    },

    #[error("no admissible control at the upper horizon T_hi = {t_hi}: {reason}")]
    InfeasibleAtHi { t_hi: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
