use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{norms, Grid, Interval, SourceField, SpaceTimeField, Trajectory};

/// Space-time control `u(x, t)` supported in `ω`.
///
/// Level `n` acts on the step `t_n -> t_{n+1}`, so the source seen by the forward
/// solvers is `f^{n+1} = 1_ω u^n` (see [`ControlSchedule::to_source`]). Endpoint levels
/// and every level before `phase_start` vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    omega: Interval,
    values: SpaceTimeField,
    phase_start: f64,
}

impl ControlSchedule {
    pub fn zeros(grid: Grid, omega: Interval) -> Self {
        Self {
            omega,
            values: SpaceTimeField::zeros(grid),
            phase_start: 0.0,
        }
    }

    /// Wraps `values` after checking the support constraints.
    pub fn new(values: SpaceTimeField, omega: Interval, phase_start: f64) -> Result<Self> {
        let g = *values.grid();
        let mask = omega.mask(&g);
        for k in 0..g.n_levels() {
            let silent = k == 0 || k == g.n_t() || g.t(k) < phase_start - 1e-12 * g.horizon();
            for (i, &v) in values.level(k).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("control is not finite at ({k}, {i})")));
                }
                if v != 0.0 && (silent || mask[i] == 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "control is nonzero outside its support at level {k}, node {i}"
                    )));
                }
            }
        }
        Ok(Self {
            omega,
            values,
            phase_start,
        })
    }

    /// Like [`ControlSchedule::new`] but zeroes everything outside the support.
    pub fn projected(mut values: SpaceTimeField, omega: Interval, phase_start: f64) -> Self {
        let g = *values.grid();
        let mask = omega.mask(&g);
        for k in 0..g.n_levels() {
            let silent = k == 0 || k == g.n_t() || g.t(k) < phase_start - 1e-12 * g.horizon();
            for (v, m) in values.level_mut(k).iter_mut().zip(&mask) {
                if silent || *m == 0.0 {
                    *v = 0.0;
                }
            }
        }
        Self {
            omega,
            values,
            phase_start,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    pub fn omega(&self) -> Interval {
        self.omega
    }

    pub fn values(&self) -> &SpaceTimeField {
        &self.values
    }

    pub fn phase_start(&self) -> f64 {
        self.phase_start
    }

    pub fn linf(&self) -> f64 {
        self.values.max_abs()
    }

    pub fn is_zero(&self) -> bool {
        self.values.as_slice().iter().all(|&v| v == 0.0)
    }

    /// Source field with `f^0 = 0` and `f^{n+1} = u^n`.
    pub fn to_source(&self) -> SourceField {
        let g = *self.grid();
        let mut f = SourceField::zeros(g);
        for k in 0..g.n_t() {
            f.level_mut(k + 1).copy_from_slice(self.values.level(k));
        }
        f
    }

    /// Places a schedule living on a window of `outer` starting at level `offset`.
    pub fn embed(&self, outer: &Grid, offset: usize) -> Result<Self> {
        let inner = self.grid();
        if offset + inner.n_t() > outer.n_t() || inner.n_x() != outer.n_x() {
            return Err(Error::InvalidInput("window does not fit in the outer grid".into()));
        }
        let mut values = SpaceTimeField::zeros(*outer);
        for k in 0..inner.n_levels() {
            values.level_mut(offset + k).copy_from_slice(self.values.level(k));
        }
        Ok(Self::projected(values, self.omega, outer.t(offset)))
    }
}

/// The three `δ`-checks `||y_x||_∞`, `||√t y_t||_∞`, `||y_xt||_{L²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMembership {
    pub delta: f64,
    pub yx_linf: f64,
    pub sqrt_t_yt_linf: f64,
    pub yxt_l2: f64,
    pub within: bool,
}

impl KMembership {
    pub fn evaluate(y: &Trajectory, delta: f64) -> Self {
        let g = y.grid();
        let (dx, dt) = (g.dx(), g.dt());
        let yx_linf = y
            .levels()
            .map(|l| norms::linf(&norms::derivative(l, dx)))
            .fold(0.0, f64::max);
        let mut sqrt_t_yt_linf: f64 = 0.0;
        let mut yxt_sq = 0.0;
        for k in 1..g.n_levels() {
            let yt: Vec<f64> = y.level(k).iter().zip(y.level(k - 1)).map(|(a, b)| (a - b) / dt).collect();
            sqrt_t_yt_linf = sqrt_t_yt_linf.max(g.t(k).sqrt() * norms::linf(&yt));
            yxt_sq += dt * norms::l2_sq(&norms::derivative(&yt, dx), dx);
        }
        let yxt_l2 = yxt_sq.sqrt();
        Self {
            delta,
            yx_linf,
            sqrt_t_yt_linf,
            yxt_l2,
            within: yx_linf <= delta && sqrt_t_yt_linf <= delta && yxt_l2 <= delta,
        }
    }
}

/// Control cost and terminal diagnostics of a controlled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// `∬ (u² + u_t²)`.
    pub l2_cost: f64,
    /// `||u||_∞`.
    pub linf_cost: f64,
    /// `l2_cost / ||y0||²`, 0 when `y0 = 0`.
    pub c1_ratio: f64,
    /// `linf_cost / ||y0||`, 0 when `y0 = 0`.
    pub c2_ratio: f64,
    pub terminal_norm: f64,
    pub k_membership: KMembership,
}

/// Costs of `u` for the run `y` from `y0`; `u_t` by forward differences, zero on the last level.
pub fn cost_report(u: &ControlSchedule, y: &Trajectory, y0: &[f64], delta: f64) -> Result<CostReport> {
    let g = *u.grid();
    if y.grid() != &g || y0.len() != g.n_nodes() {
        return Err(Error::InvalidInput("control, trajectory and y0 must share a grid".into()));
    }
    let values = u.values();
    let mut ut = SpaceTimeField::zeros(g);
    for k in 0..g.n_t() {
        let next = values.level(k + 1).to_vec();
        for (i, v) in ut.level_mut(k).iter_mut().enumerate() {
            *v = (next[i] - values.get(k, i)) / g.dt();
        }
    }
    let l2_cost = norms::l2_space_time_sq(values) + norms::l2_space_time_sq(&ut);
    let linf_cost = u.linf();
    let y0_l2 = norms::l2(y0, g.dx());
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(CostReport {
        l2_cost,
        linf_cost,
        c1_ratio: ratio(l2_cost, y0_l2 * y0_l2),
        c2_ratio: ratio(linf_cost, y0_l2),
        terminal_norm: norms::l2(y.terminal(), g.dx()),
        k_membership: KMembership::evaluate(y, delta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_violations_are_rejected() {
        let grid = Grid::new(15, 8, 1.0).unwrap();
        let omega = Interval::new(0.3, 0.7).unwrap();
        let outside = SpaceTimeField::from_fn(grid, |x, t| if x < 0.2 && t > 0.1 && t < 0.9 { 1.0 } else { 0.0 });
        assert!(ControlSchedule::new(outside.clone(), omega, 0.0).is_err());
        let p = ControlSchedule::projected(outside, omega, 0.0);
        assert!(p.is_zero());
        let endpoint = SpaceTimeField::from_fn(grid, |x, t| if omega.contains(x) && t == 0.0 { 1.0 } else { 0.0 });
        assert!(ControlSchedule::new(endpoint, omega, 0.0).is_err());
    }

    #[test]
    fn source_is_shifted_by_one_level() {
        let grid = Grid::new(7, 4, 1.0).unwrap();
        let omega = Interval::new(0.2, 0.8).unwrap();
        let u = ControlSchedule::projected(SpaceTimeField::from_fn(grid, |_, t| t), omega, 0.0);
        let f = u.to_source();
        assert!(f.level(0).iter().all(|&v| v == 0.0));
        assert_eq!(f.level(2), u.values().level(1));
        assert_eq!(f.level(4), u.values().level(3));
    }

    #[test]
    fn zero_control_costs_nothing() {
        let grid = Grid::new(15, 8, 1.0).unwrap();
        let u = ControlSchedule::zeros(grid, Interval::new(0.3, 0.7).unwrap());
        let y = Trajectory::zeros(grid);
        let r = cost_report(&u, &y, &[0.0; 17], 1.0).unwrap();
        assert_eq!((r.l2_cost, r.linf_cost, r.c1_ratio, r.c2_ratio, r.terminal_norm), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(r.k_membership.within);
    }

    #[test]
    fn embedding_keeps_values_and_phase() {
        let outer = Grid::new(7, 12, 1.2).unwrap();
        let inner = outer.with_time(8, outer.t(12) - outer.t(4)).unwrap();
        let omega = Interval::new(0.2, 0.8).unwrap();
        let u = ControlSchedule::projected(SpaceTimeField::constant(inner, 1.0), omega, 0.0);
        let e = u.embed(&outer, 4).unwrap();
        assert!((e.phase_start() - 0.4).abs() < 1e-12);
        assert_eq!(e.values().level(6), u.values().level(2));
        assert!(e.values().level(3).iter().all(|&v| v == 0.0));
    }
}
