//! Numerical laboratory for null controllability of 1D quasilinear parabolic equations
//! `y_t - (a(y) y_x)_x = 1_ω u (g(y) - θ)` on `(0, 1)` with Dirichlet boundary data.
//!
//! Modules, bottom-up:
//! - [`pde`]: grids, certified diffusion coefficients, implicit forward solvers
//!   (direct and Kirchhoff form) and the frozen-coefficient adjoint.
//! - [`estimates`]: decay, maximum-modulus and regularity diagnostics on trajectories.
//! - [`carleman`]: the auxiliary function ψ, Carleman weights and the observability probe.
//! - [`null_control`]: penalized weighted null control with Picard iteration.
//! - [`mult_control`]: multiplicative control synthesis and minimal-time search.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod error;
pub mod estimates;
pub mod families;
pub mod mult_control;
pub mod null_control;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod tridiag;

pub use error::{Error, Result};
