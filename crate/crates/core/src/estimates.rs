//! Quantitative decay, maximum-modulus and regularity diagnostics evaluated on
//! computed trajectories.
//!
//! Discrete norms follow [`crate::pde::norms`]: trapezoid rule for `L^2`, centered
//! differences for `y_x`, grid maxima for `L^∞`. All functions are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{norms, DiffusionSpec, SourceField, Trajectory};
use crate::quadrature::gauss_legendre;
use crate::rng::{seeded, SinePolynomial};

/// Exponential rate `(2π² - 1) ρ / (2(π² + 1))` of the gated `H^1` decay.
pub fn h1_decay_rate(rho: f64) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    (2.0 * pi2 - 1.0) * rho / (2.0 * (pi2 + 1.0))
}

/// `L^∞` level below which the `H^1` decay estimate applies: `ρ / (4 M C0²)`.
/// Infinite when `M = 0`.
pub fn smallness_gate(spec: &DiffusionSpec, c0: GnConstant) -> f64 {
    let m = spec.m_bound();
    if m == 0.0 {
        f64::INFINITY
    } else {
        spec.rho() / (4.0 * m * c0.value() * c0.value())
    }
}

/// Discretization slack `10 (dx² + dt) · scale` used by every inequality check.
pub fn discretization_slack(traj: &Trajectory, scale: f64) -> f64 {
    let g = traj.grid();
    10.0 * (g.dx() * g.dx() + g.dt()) * scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    /// `M(t) = max_x |y(x, t)|`.
    pub m_profile: Vec<f64>,
    /// `(2ρ)^{-1/2} ||y0||_{L^2} t^{-1/2}`; `+∞` at `t = 0`.
    pub linf_bound_profile: Vec<f64>,
    /// `E(t) = ½ ∫ (y² + y_x²)`.
    pub e_profile: Vec<f64>,
    /// Largest increase `M(t_{k+1}) - M(t_k)`, clipped at 0.
    pub monotone_violation: f64,
    /// `max_k (M(t_k) - bound(t_k))` over `k >= 1` (negative when the bound holds strictly).
    pub bound_violation: f64,
    pub slack: f64,
    /// First level where `||y||_∞` is below the smallness gate.
    pub gate_index: Option<usize>,
    /// Fitted decay rate of `||y||_{H^1} = sqrt(2E)` on the gated tail.
    pub h1_rate_estimate: Option<f64>,
    /// Rate guaranteed by the estimate, `(2π²-1)ρ/(2(π²+1))`.
    pub h1_rate_bound: f64,
    /// Zero trajectory: rate fit skipped.
    pub degenerate: bool,
}

impl DecayReport {
    pub fn linf_checks_pass(&self) -> bool {
        self.monotone_violation <= 1e-10 && self.bound_violation <= self.slack
    }

    /// `h1_rate_estimate >= bound - 0.05 ρ`; vacuous for degenerate runs.
    pub fn h1_check_passes(&self, rho: f64) -> bool {
        match self.h1_rate_estimate {
            Some(rate) => rate >= self.h1_rate_bound - 0.05 * rho,
            None => self.degenerate,
        }
    }
}

/// Maximum-modulus profile and its comparison with the `t^{-1/2}` bound.
/// The trajectory is assumed to be a free evolution.
pub fn linf_decay_report(traj: &Trajectory, spec: &DiffusionSpec, y0_l2: f64) -> DecayReport {
    let g = traj.grid();
    let times: Vec<f64> = (0..g.n_levels()).map(|k| g.t(k)).collect();
    let m_profile: Vec<f64> = traj.levels().map(norms::linf).collect();
    let c = (2.0 * spec.rho()).powf(-0.5) * y0_l2;
    let linf_bound_profile: Vec<f64> = times
        .iter()
        .map(|&t| if t > 0.0 { c / t.sqrt() } else { f64::INFINITY })
        .collect();
    let monotone_violation = m_profile
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0_f64, f64::max);
    let bound_violation = m_profile
        .iter()
        .zip(&linf_bound_profile)
        .skip(1)
        .map(|(m, b)| m - b)
        .fold(f64::NEG_INFINITY, f64::max);
    DecayReport {
        e_profile: energy_profile(traj),
        times,
        m_profile,
        linf_bound_profile,
        monotone_violation,
        bound_violation,
        slack: discretization_slack(traj, y0_l2),
        gate_index: None,
        h1_rate_estimate: None,
        h1_rate_bound: h1_decay_rate(spec.rho()),
        degenerate: traj.max_abs() == 0.0,
    }
}

/// `E(t)` at every level.
pub fn energy_profile(traj: &Trajectory) -> Vec<f64> {
    let dx = traj.grid().dx();
    traj.levels().map(|l| 0.5 * norms::h1_sq(l, dx)).collect()
}

/// Gated `H^1` decay: locate the smallness gate and fit the exponential rate of
/// `sqrt(2E)` on the last half of the gated window.
pub fn h1_decay_report(traj: &Trajectory, spec: &DiffusionSpec, c0: GnConstant) -> Result<DecayReport> {
    let y0_l2 = norms::l2(traj.level(0), traj.grid().dx());
    let mut report = linf_decay_report(traj, spec, y0_l2);
    if report.degenerate {
        report.gate_index = Some(0);
        return Ok(report);
    }
    let gate = smallness_gate(spec, c0);
    let gate_index = report
        .m_profile
        .iter()
        .position(|&m| m <= gate)
        .ok_or_else(|| Error::GateNeverActive {
            min_linf: report.m_profile.iter().copied().fold(f64::INFINITY, f64::min),
            gate,
        })?;
    report.gate_index = Some(gate_index);
    let n_levels = report.times.len();
    let start = gate_index + (n_levels - gate_index) / 2;
    let (ts, logs): (Vec<f64>, Vec<f64>) = (start..n_levels)
        .filter(|&k| report.e_profile[k] > 1e-280)
        .map(|k| (report.times[k], 0.5 * (2.0 * report.e_profile[k]).ln()))
        .unzip();
    if ts.len() < 3 {
        return Err(Error::HorizonTooShort(format!(
            "gated window has {} usable levels, need at least 3",
            ts.len()
        )));
    }
    report.h1_rate_estimate = Some(-least_squares_slope(&ts, &logs));
    Ok(report)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `sup|y0| + (6/ρ) ||f||_{L^∞(Q_T)}`.
pub fn max_modulus_bound(y0: &[f64], f: &SourceField, spec: &DiffusionSpec) -> f64 {
    norms::linf(y0) + 6.0 / spec.rho() * f.max_abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RegularityRatio {
    Ratio(f64),
    /// `y0 ≡ 0`: the denominator vanishes.
    Degenerate,
}

/// `[∫ (A(y))_xx² + y_x² + y²](t0) / ∫ (y0² + y0_x²)` at the level nearest `t0`.
pub fn regularity_ratio(traj: &Trajectory, spec: &DiffusionSpec, t0: f64) -> Result<RegularityRatio> {
    let g = traj.grid();
    if !(t0 > 0.0 && t0 <= g.horizon()) {
        return Err(Error::InvalidInput(format!("t0 = {t0} must lie in (0, T]")));
    }
    let k = ((t0 / g.dt()).round() as usize).clamp(1, g.n_t());
    let dx = g.dx();
    let denom = norms::h1_sq(traj.level(0), dx);
    if denom == 0.0 {
        return Ok(RegularityRatio::Degenerate);
    }
    let y = traj.level(k);
    let z: Vec<f64> = y.iter().map(|&v| spec.antiderivative(v)).collect();
    let zxx = norms::second_derivative(&z, dx);
    let numer = norms::l2_sq(&zxx, dx) + norms::h1_sq(y, dx);
    let ratio = numer / denom;
    if !ratio.is_finite() {
        return Err(Error::InvalidInput("regularity ratio is not finite".into()));
    }
    Ok(RegularityRatio::Ratio(ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessTimes {
    /// `32 M² C0⁴ / ρ³`.
    pub t1_theory: f64,
    /// First grid time with `||y||_∞ <= ρ/(4 M C0²)` (0 when `M = 0`).
    pub t1_observed: f64,
    /// First grid time at or after `t1_observed` with `||y||_{H^1} < η`.
    pub t2_observed: f64,
}

pub fn t1_theory(spec: &DiffusionSpec, c0: GnConstant) -> f64 {
    32.0 * spec.m_bound().powi(2) * c0.value().powi(4) / spec.rho().powi(3)
}

pub fn smallness_times(traj: &Trajectory, spec: &DiffusionSpec, c0: GnConstant, eta: f64) -> Result<SmallnessTimes> {
    let g = traj.grid();
    let gate = smallness_gate(spec, c0);
    let k1 = if spec.m_bound() == 0.0 {
        0
    } else {
        traj.levels()
            .position(|l| norms::linf(l) <= gate)
            .ok_or_else(|| Error::HorizonTooShort(format!("L^inf gate {gate:.3e} not reached")))?
    };
    let k2 = (k1..g.n_levels())
        .find(|&k| norms::h1(traj.level(k), g.dx()) < eta)
        .ok_or_else(|| Error::HorizonTooShort(format!("H^1 gate eta = {eta:.3e} not reached")))?;
    Ok(SmallnessTimes {
        t1_theory: t1_theory(spec, c0),
        t1_observed: g.t(k1),
        t2_observed: g.t(k2),
    })
}

/// Constant in `||u_x||_{L^4} <= C0 ||u||_∞^{1/2} ||u_xx||_{L^2}^{1/2} + C0 ||u||_{L^2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnConstant(f64);

impl Default for GnConstant {
    fn default() -> Self {
        GnConstant(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnValidation {
    pub samples: usize,
    /// Largest constant required by any sample.
    pub max_required: f64,
    pub violations: usize,
    /// `C0` itself when valid, otherwise `1.1 × max_required`.
    pub proposed: f64,
}

impl GnConstant {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(GnConstant(value))
        } else {
            Err(Error::ParameterRejected(format!("C0 = {value} must be > 0")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Constant needed by one test function, from Gauss–Legendre quadrature and a
    /// dense maximum search.
    pub fn required_for(u: &SinePolynomial) -> f64 {
        let ux4 = gauss_legendre(&|x| u.derivative(x).powi(4), 0.0, 1.0, 200).powf(0.25);
        let uxx2 = gauss_legendre(&|x| u.second_derivative(x).powi(2), 0.0, 1.0, 200).sqrt();
        let u2 = u.l2_norm();
        let uinf = (0..=4000)
            .map(|j| u.eval(j as f64 / 4000.0).abs())
            .fold(0.0_f64, f64::max);
        ux4 / (uinf.sqrt() * uxx2.sqrt() + u2)
    }

    /// Evaluates the inequality on `n_samples` seeded random sine polynomials with up
    /// to 8 modes.
    pub fn validate(self, n_samples: usize, seed: u64) -> GnValidation {
        let mut rng = seeded(seed);
        let mut max_required = 0.0_f64;
        let mut violations = 0;
        for j in 0..n_samples {
            let modes = 1 + j % 8;
            let u = SinePolynomial::random(&mut rng, modes);
            let req = Self::required_for(&u);
            if req > self.0 {
                violations += 1;
            }
            max_required = max_required.max(req);
        }
        GnValidation {
            samples: n_samples,
            max_required,
            violations,
            proposed: if violations == 0 { self.0 } else { 1.1 * max_required },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{solve_free, Grid};
    use std::f64::consts::PI;

    #[test]
    fn printed_rate_constant() {
        assert!((h1_decay_rate(1.0) - 0.862_05).abs() < 1e-4);
    }

    #[test]
    fn max_modulus_arithmetic() {
        let spec = DiffusionSpec::constant(1.0, (-1.0, 1.0)).unwrap();
        let grid = Grid::new(9, 4, 1.0).unwrap();
        let mut y0 = vec![0.0; 11];
        y0[5] = -0.3;
        let f = SourceField::from_fn(grid, |x, _| if x > 0.5 { 0.1 } else { -0.05 });
        let b = max_modulus_bound(&y0, &f, &spec);
        // ρ carries the 1% margin.
        assert!((b - (0.3 + 6.0 / 0.99 * 0.1)).abs() < 1e-12);
        assert_eq!(max_modulus_bound(&y0, &SourceField::zeros(grid), &spec), 0.3);
    }

    #[test]
    fn zero_trajectory_is_degenerate() {
        let spec = DiffusionSpec::constant(1.0, (-1.0, 1.0)).unwrap();
        let grid = Grid::new(15, 8, 1.0).unwrap();
        let traj = Trajectory::zeros(grid);
        let r = h1_decay_report(&traj, &spec, GnConstant::default()).unwrap();
        assert!(r.degenerate && r.h1_rate_estimate.is_none());
        assert!(r.m_profile.iter().all(|&m| m == 0.0));
        assert!(r.linf_checks_pass());
        assert_eq!(regularity_ratio(&traj, &spec, 0.5).unwrap(), RegularityRatio::Degenerate);
    }

    #[test]
    fn t1_formula() {
        // Linear a with min 1/0.99 at s = -1 and slope 0.5/1.01, so that after the
        // 1% margins ρ = 1 and M = 0.5; with C0 = 1 the waiting time is 8.
        let slope = 0.5 / 1.01;
        let spec = DiffusionSpec::build(
            std::sync::Arc::new(move |s: f64| 1.0 / 0.99 + slope * (s + 1.0)),
            std::sync::Arc::new(move |_| slope),
            (-1.0, 1.0),
            200,
        )
        .unwrap();
        let t1 = t1_theory(&spec, GnConstant::new(1.0).unwrap());
        assert!((t1 - 8.0).abs() < 1e-9, "t1 = {t1}");
    }

    #[test]
    fn gate_is_vacuous_for_constant_coefficient() {
        let spec = DiffusionSpec::constant(1.0, (-1.0, 1.0)).unwrap();
        let grid = Grid::new(31, 64, 0.5).unwrap();
        let y0 = grid.sample(|x| 3.0 * (PI * x).sin());
        let traj = solve_free(&y0, &grid, &spec).unwrap();
        let times = smallness_times(&traj, &spec, GnConstant::default(), 0.5).unwrap();
        assert_eq!(times.t1_theory, 0.0);
        assert_eq!(times.t1_observed, 0.0);
        assert!(times.t2_observed > 0.0);
    }

    #[test]
    fn gate_never_active_is_reported() {
        let spec = crate::families::DiffusionFamily::two_plus_sin().build(4.0).unwrap();
        let grid = Grid::new(15, 4, 1e-4).unwrap();
        let y0 = grid.sample(|x| 2.0 * (PI * x).sin());
        let traj = solve_free(&y0, &grid, &spec).unwrap();
        let err = h1_decay_report(&traj, &spec, GnConstant::default()).unwrap_err();
        assert!(matches!(err, Error::GateNeverActive { .. }));
    }

    #[test]
    fn default_gn_constant_is_valid() {
        let v = GnConstant::default().validate(200, 1);
        assert_eq!(v.violations, 0, "max required {}", v.max_required);
        assert!(v.max_required > 0.0);
        let tight = GnConstant::new(0.1).unwrap().validate(50, 1);
        assert!(tight.violations > 0 && tight.proposed > tight.max_required);
    }
}
