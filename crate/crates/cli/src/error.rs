use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] qparctl_core::Error),

    #[error("writing {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl CliError {
    /// 1 for bad input, 2 for solver, search and output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Core(_) | CliError::Output { .. } => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        use qparctl_core::Error as E;
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Validation(_) => "validation",
            CliError::Output { .. } => "output",
            CliError::Core(e) => match e {
                E::InvalidInput(_) => "invalid_input",
                E::RejectedCoefficient { .. } => "rejected_coefficient",
                E::SolverDiverged { .. } => "solver_diverged",
                E::InverseLookupFailure { .. } => "inverse_lookup_failure",
                E::NonellipticCoefficient { .. } => "nonelliptic_coefficient",
                E::GateNeverActive { .. } => "gate_never_active",
                E::HorizonTooShort(_) => "horizon_too_short",
                E::ConstructionFailed(_) => "construction_failed",
                E::ParameterRejected(_) => "parameter_rejected",
                E::CgStalled { .. } => "cg_stalled",
                E::NonSymmetric { .. } => "non_symmetric",
                E::FixedPointDiverged { .. } => "fixed_point_diverged",
                E::SmallnessGateExceeded { .. } => "smallness_gate_exceeded",
                E::SafeguardViolated { .. } => "safeguard_violated",
                E::AdaptiveWaitExhausted { .. } => "adaptive_wait_exhausted",
                E::InfeasibleAtHi { .. } => "infeasible_at_hi",
            },
        }
    }
}

pub(crate) fn output_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |e| CliError::Output {
        path,
        message: e.to_string(),
    }
}
