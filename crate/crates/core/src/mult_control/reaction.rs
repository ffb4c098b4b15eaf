use std::sync::Arc;

use crate::error::{Error, Result};
use crate::null_control::ControlSchedule;
use crate::pde::{Grid, Interval, ScalarFn, Trajectory};

pub type ThetaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Reaction `g` and coefficient `θ` of the multiplicative source `1_ω u (g(y) - θ)`.
#[derive(Clone)]
pub struct ReactionSpec {
    g: ScalarFn,
    theta: ThetaFn,
    theta0: f64,
}

impl std::fmt::Debug for ReactionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReactionSpec").field("theta0", &self.theta0).finish_non_exhaustive()
    }
}

impl ReactionSpec {
    pub fn new(g: ScalarFn, theta: ThetaFn, theta0: f64) -> Result<Self> {
        if g(0.0) != 0.0 {
            return Err(Error::InvalidInput("reaction must satisfy g(0) = 0".into()));
        }
        if !(theta0 > 0.0 && theta0.is_finite()) {
            return Err(Error::InvalidInput("θ0 must be positive".into()));
        }
        Ok(Self { g, theta, theta0 })
    }

    pub fn g(&self, s: f64) -> f64 {
        (self.g)(s)
    }

    pub fn theta(&self, x: f64, t: f64) -> f64 {
        (self.theta)(x, t)
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Checks `|θ| >= θ0` on the `ω` nodes of `grid`, with absolute time `t_offset + t_k`.
    pub fn check_theta(&self, grid: &Grid, omega: Interval, t_offset: f64) -> Result<()> {
        for k in 0..grid.n_levels() {
            let t = t_offset + grid.t(k);
            for i in 0..grid.n_nodes() {
                let x = grid.x(i);
                if omega.contains(x) && self.theta(x, t).abs() < self.theta0 {
                    return Err(Error::InvalidInput(format!(
                        "|θ({x}, {t})| = {} is below θ0 = {}",
                        self.theta(x, t).abs(),
                        self.theta0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Local Lipschitz constant of `g` on `[-a, a]` from dense sampling.
    pub fn lipschitz(&self, a: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        let h = 2.0 * a / n as f64;
        (0..n)
            .map(|j| {
                let s = -a + j as f64 * h;
                ((self.g(s + h) - self.g(s)) / h).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Multiplicative schedule and the smallest denominator on its support.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub control: ControlSchedule,
    /// `min |g(Y) - θ|` over the `ω` nodes of the window.
    pub min_denominator: f64,
    /// `||g(Y)||_∞` over the window.
    pub g_linf: f64,
}

/// `ũ = v / (g(Y) - θ)` on a control window whose level 0 sits at absolute time `t_offset`.
/// Fails with [`Error::SafeguardViolated`] unless `||g(Y)||_∞ <= θ0 / 2` on the window.
pub fn synthesize_multiplicative(
    v: &ControlSchedule,
    y: &Trajectory,
    rs: &ReactionSpec,
    t_offset: f64,
) -> Result<Synthesis> {
    let grid = *v.grid();
    if y.grid() != &grid {
        return Err(Error::InvalidInput("control and state live on different grids".into()));
    }
    let limit = 0.5 * rs.theta0();
    let mut g_linf: f64 = 0.0;
    for k in 0..grid.n_levels() {
        for i in 0..grid.n_nodes() {
            let g_abs = rs.g(y.get(k, i)).abs();
            if g_abs > limit {
                return Err(Error::SafeguardViolated {
                    x: grid.x(i),
                    t: t_offset + grid.t(k),
                    g_abs,
                    limit,
                });
            }
            g_linf = g_linf.max(g_abs);
        }
    }
    let omega = v.omega();
    let mut values = v.values().clone();
    let mut min_denominator = f64::INFINITY;
    for k in 0..grid.n_levels() {
        let t = t_offset + grid.t(k);
        for i in 0..grid.n_nodes() {
            let x = grid.x(i);
            if !omega.contains(x) {
                continue;
            }
            let den = rs.g(y.get(k, i)) - rs.theta(x, t);
            min_denominator = min_denominator.min(den.abs());
            let slot = &mut values.level_mut(k)[i];
            *slot = if *slot == 0.0 { 0.0 } else { *slot / den };
        }
    }
    Ok(Synthesis {
        control: ControlSchedule::new(values, omega, v.phase_start())?,
        min_denominator,
        g_linf,
    })
}
