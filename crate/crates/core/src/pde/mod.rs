//! Grids, coefficients and implicit solvers for the quasilinear equation, its
//! Kirchhoff-transformed form and the frozen-coefficient adjoint.

pub mod diffusion;
pub mod field;
pub mod grid;
pub mod kirchhoff;
pub mod linear;
pub mod solver;

pub use diffusion::{DiffusionSpec, SampledBounds, ScalarFn};
pub use field::{norms, SourceField, SpaceTimeField, Trajectory};
pub use grid::{Grid, Interval};
pub use kirchhoff::solve_forward_kirchhoff;
pub use linear::{solve_adjoint, source_pairing, FrozenCoefficient};
pub use solver::{
    flux_divergence, solve_forward, solve_forward_feedback, solve_forward_with, solve_free, step_implicit,
    step_theta, TimeScheme,
};
