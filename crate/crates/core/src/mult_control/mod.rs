//! Multiplicative control `y_t - (a(y) y_x)_x = 1_ω u (g(y) - θ)`: synthesis from an
//! additive control, the staged pipeline, and the minimal-time search under `|u| <= σ`.

mod pipeline;
mod reaction;
mod search;

pub use pipeline::{
    pipeline_with_wait, multiplicative_pipeline, wait_refinement, CarlemanSetup, MultPipelineResult, PipelineParams,
    WaitAttempt, MIN_WINDOW_STEPS,
};
pub use reaction::{synthesize_multiplicative, ReactionSpec, Synthesis, ThetaFn};
pub use search::{
    admissible_check, time_optimal_search, AdmissibleReport, CandidateRecord, SearchOutcome, TimeOptimalParams,
    TrialRecord, WAIT_FRACTIONS,
};
