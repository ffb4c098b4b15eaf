//! Registry of named coefficient, reaction and initial-state families.
//!
//! Scenarios refer to these by name so that every run is reproducible and the
//! certified bounds of the diffusion coefficient are computed from known formulas.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{DiffusionSpec, Grid, ScalarFn};
use crate::rng::{seeded, SinePolynomial};

/// Diffusion coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DiffusionFamily {
    /// `a(s) = value`.
    Constant { value: f64 },
    /// `a(s) = base + amplitude * sin(s)`; the default is `2 + sin s`.
    Sine {
        #[serde(default = "two")]
        base: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `a(s) = 1 + alpha * atan(s)`, requires `|alpha| < 2/π`.
    Arctan { alpha: f64 },
    /// `a(s) = Σ c_j clamp(s)^j` with `clamp(s) = min(max(s, -limit), limit)`.
    Polynomial { coeffs: Vec<f64>, limit: f64 },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl DiffusionFamily {
    pub fn two_plus_sin() -> Self {
        DiffusionFamily::Sine {
            base: 2.0,
            amplitude: 1.0,
        }
    }

    pub fn functions(&self) -> (ScalarFn, ScalarFn) {
        match self.clone() {
            DiffusionFamily::Constant { value } => (Arc::new(move |_| value), Arc::new(|_| 0.0)),
            DiffusionFamily::Sine { base, amplitude } => (
                Arc::new(move |s: f64| base + amplitude * s.sin()),
                Arc::new(move |s: f64| amplitude * s.cos()),
            ),
            DiffusionFamily::Arctan { alpha } => (
                Arc::new(move |s: f64| 1.0 + alpha * s.atan()),
                Arc::new(move |s: f64| alpha / (1.0 + s * s)),
            ),
            DiffusionFamily::Polynomial { coeffs, limit } => {
                let c2 = coeffs.clone();
                (
                    Arc::new(move |s: f64| {
                        let x = s.clamp(-limit, limit);
                        coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
                    }),
                    Arc::new(move |s: f64| {
                        if s.abs() > limit {
                            return 0.0;
                        }
                        c2.iter()
                            .enumerate()
                            .skip(1)
                            .rev()
                            .fold(0.0, |acc, (j, c)| acc * s + j as f64 * c)
                    }),
                )
            }
        }
    }

    /// Builds the certified [`DiffusionSpec`] sampled over `[-half_width, half_width]`.
    pub fn build(&self, half_width: f64) -> Result<DiffusionSpec> {
        if let DiffusionFamily::Polynomial { limit, .. } = self {
            if !(*limit > 0.0) {
                return Err(Error::InvalidInput("polynomial clamp limit must be > 0".into()));
            }
        }
        let (a, ap) = self.functions();
        // Odd count so that s = 0 is sampled.
        let n = 2 * ((200.0 * half_width).ceil() as usize).max(500) + 1;
        DiffusionSpec::build(a, ap, (-half_width, half_width), n)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DiffusionFamily::Constant { .. })
    }
}

/// Reaction term `g` of the multiplicative source `u (g(y) - θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ReactionFamily {
    Zero,
    /// `g(s) = coeff * s^exponent`, `exponent >= 1`.
    Power { coeff: f64, exponent: u32 },
    /// `g(s) = coeff * tanh(s)`.
    Tanh { coeff: f64 },
}

impl ReactionFamily {
    pub fn square() -> Self {
        ReactionFamily::Power {
            coeff: 1.0,
            exponent: 2,
        }
    }

    pub fn function(&self) -> Result<ScalarFn> {
        Ok(match *self {
            ReactionFamily::Zero => Arc::new(|_| 0.0),
            ReactionFamily::Power { coeff, exponent } => {
                if exponent == 0 {
                    return Err(Error::InvalidInput("g(0) = 0 requires exponent >= 1".into()));
                }
                Arc::new(move |s: f64| coeff * s.powi(exponent as i32))
            }
            ReactionFamily::Tanh { coeff } => Arc::new(move |s: f64| coeff * s.tanh()),
        })
    }
}

/// Space-time coefficient `θ(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ThetaFamily {
    Constant { value: f64 },
    /// `θ = value + amplitude * sin(2πx) * cos(t)`.
    Modulated { value: f64, amplitude: f64 },
}

impl ThetaFamily {
    pub fn function(&self) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        match *self {
            ThetaFamily::Constant { value } => Arc::new(move |_, _| value),
            ThetaFamily::Modulated { value, amplitude } => Arc::new(move |x: f64, t: f64| {
                value + amplitude * (2.0 * std::f64::consts::PI * x).sin() * t.cos()
            }),
        }
    }
}

/// Initial-state families; the profile is scaled so that its maximum modulus equals
/// `amplitude` (sine sums and bumps) or its `L^2` norm equals `amplitude` (random).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialFamily {
    /// `Σ w_k sin(kπx)` with `(k, w_k)` pairs, multiplied by `amplitude` as given.
    SineSum { modes: Vec<(u32, f64)> },
    /// Smooth compactly supported bump `exp(1 - 1/(1 - r^2))`, `r = (x - center)/width`.
    Bump { center: f64, width: f64 },
    /// Seeded random sine polynomial normalized to unit `L^2` norm.
    RandomTrig { n_modes: usize },
}

impl InitialFamily {
    pub fn sine() -> Self {
        InitialFamily::SineSum { modes: vec![(1, 1.0)] }
    }

    pub fn sample(&self, grid: &Grid, amplitude: f64, seed: u64) -> Result<Vec<f64>> {
        if !amplitude.is_finite() {
            return Err(Error::InvalidInput("amplitude must be finite".into()));
        }
        let profile = match self {
            InitialFamily::SineSum { modes } => grid.sample(|x| {
                modes
                    .iter()
                    .map(|&(k, w)| w * (k as f64 * std::f64::consts::PI * x).sin())
                    .sum::<f64>()
                    * amplitude
            }),
            InitialFamily::Bump { center, width } => {
                if !(*width > 0.0) || center - width < 0.0 || center + width > 1.0 {
                    return Err(Error::InvalidInput("bump support must lie inside [0, 1]".into()));
                }
                grid.sample(|x| {
                    let r = (x - center) / width;
                    if r.abs() < 1.0 {
                        amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                    } else {
                        0.0
                    }
                })
            }
            InitialFamily::RandomTrig { n_modes } => {
                if *n_modes == 0 {
                    return Err(Error::InvalidInput("random_trig needs n_modes >= 1".into()));
                }
                let p = SinePolynomial::random(&mut seeded(seed), *n_modes);
                let norm = p.l2_norm();
                grid.sample(|x| amplitude * p.eval(x) / norm)
            }
        };
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivative_matches_finite_difference() {
        let fam = DiffusionFamily::Polynomial {
            coeffs: vec![2.0, 0.3, -0.1, 0.02],
            limit: 3.0,
        };
        let (a, ap) = fam.functions();
        for s in [-2.5, -0.4, 0.0, 1.1, 2.9] {
            let fd = (a(s + 1e-6) - a(s - 1e-6)) / 2e-6;
            assert!((fd - ap(s)).abs() < 1e-6);
        }
        assert_eq!(ap(5.0), 0.0);
        assert_eq!(a(5.0), a(3.0));
    }

    #[test]
    fn arctan_family_bounds() {
        let spec = DiffusionFamily::Arctan { alpha: 0.5 }.build(3.0).unwrap();
        let raw = spec.sampled_bounds();
        assert!((raw.min_a - (1.0 - 0.5 * 3f64.atan())).abs() < 1e-9);
        assert!((raw.max_abs_a_prime - 0.5).abs() < 1e-9);
    }

    #[test]
    fn reaction_vanishes_at_zero() {
        for fam in [ReactionFamily::Zero, ReactionFamily::square(), ReactionFamily::Tanh { coeff: 2.0 }] {
            assert_eq!(fam.function().unwrap()(0.0), 0.0);
        }
        assert!(ReactionFamily::Power { coeff: 1.0, exponent: 0 }.function().is_err());
    }

    #[test]
    fn random_initial_state_has_requested_norm() {
        let grid = Grid::new(255, 4, 1.0).unwrap();
        let y0 = InitialFamily::RandomTrig { n_modes: 4 }.sample(&grid, 0.3, 9).unwrap();
        let l2 = crate::pde::norms::l2(&y0, grid.dx());
        assert!((l2 - 0.3).abs() < 1e-6);
    }
}
