use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Shared scalar function `s ↦ f(s)`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const SAFETY_MARGIN: f64 = 0.01;
const TABLE_STEP: f64 = 1.0 / 128.0;
const CELL_TOL: f64 = 1e-14;

/// Raw extrema observed on the sampling grid, before the safety margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledBounds {
    pub min_a: f64,
    pub max_a: f64,
    pub max_abs_a_prime: f64,
}

/// State-dependent diffusion coefficient `a(s)` with certified bounds and its
/// antiderivative `A(s) = ∫_0^s a`.
///
/// The bounds are the sampled extrema inflated (κ, M) or shrunk (ρ) by 1%.
#[derive(Clone)]
pub struct DiffusionSpec {
    a: ScalarFn,
    a_prime: ScalarFn,
    rho: f64,
    kappa: f64,
    m_bound: f64,
    sampled: SampledBounds,
    table: AntiderivativeTable,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("rho", &self.rho)
            .field("kappa", &self.kappa)
            .field("m_bound", &self.m_bound)
            .field("range", &(self.table.lo, self.table.hi))
            .finish()
    }
}

impl DiffusionSpec {
    /// Certifies `ρ ≤ a ≤ κ`, `|a'| ≤ M` on `n_samples` uniform samples of
    /// `sample_range` and tabulates `A` over that range.
    pub fn build(a: ScalarFn, a_prime: ScalarFn, sample_range: (f64, f64), n_samples: usize) -> Result<Self> {
        let (lo, hi) = sample_range;
        if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample range ({lo}, {hi}) must straddle 0"
            )));
        }
        if n_samples < 100 {
            return Err(Error::InvalidInput(format!("n_samples = {n_samples} must be >= 100")));
        }
        let mut min_a = f64::INFINITY;
        let mut min_at = lo;
        let mut max_a = f64::NEG_INFINITY;
        let mut max_ap: f64 = 0.0;
        for j in 0..n_samples {
            let s = lo + (hi - lo) * j as f64 / (n_samples - 1) as f64;
            let v = a(s);
            let dv = a_prime(s);
            if !v.is_finite() || !dv.is_finite() {
                return Err(Error::InvalidInput(format!("coefficient not finite at s = {s}")));
            }
            if v < min_a {
                min_a = v;
                min_at = s;
            }
            max_a = max_a.max(v);
            max_ap = max_ap.max(dv.abs());
        }
        if min_a <= 0.0 {
            return Err(Error::RejectedCoefficient { min_a, at: min_at });
        }
        let table = AntiderivativeTable::build(&a, lo, hi);
        Ok(Self {
            rho: min_a * (1.0 - SAFETY_MARGIN),
            kappa: max_a * (1.0 + SAFETY_MARGIN),
            m_bound: max_ap * (1.0 + SAFETY_MARGIN),
            sampled: SampledBounds {
                min_a,
                max_a,
                max_abs_a_prime: max_ap,
            },
            a,
            a_prime,
            table,
        })
    }

    /// `a ≡ value`.
    pub fn constant(value: f64, sample_range: (f64, f64)) -> Result<Self> {
        Self::build(Arc::new(move |_| value), Arc::new(|_| 0.0), sample_range, 200)
    }

    pub fn a(&self, s: f64) -> f64 {
        (self.a)(s)
    }

    pub fn a_prime(&self, s: f64) -> f64 {
        (self.a_prime)(s)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Derivative bound `M`.
    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    pub fn sampled_bounds(&self) -> SampledBounds {
        self.sampled
    }

    pub fn sample_range(&self) -> (f64, f64) {
        (self.table.lo, self.table.hi)
    }

    /// `A(s) = ∫_0^s a(τ) dτ`; cubic Hermite lookup inside the table, direct
    /// quadrature from the nearest table edge outside it.
    pub fn antiderivative(&self, s: f64) -> f64 {
        self.table.eval(&self.a, s)
    }

    /// `B(z) = A^{-1}(z)`. Outside the tabulated image the search range is extended
    /// once to twice the table half-widths before failing.
    pub fn inverse_antiderivative(&self, z: f64) -> Result<f64> {
        self.table.invert(&self.a, z)
    }
}

#[derive(Clone)]
struct AntiderivativeTable {
    lo: f64,
    hi: f64,
    step: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl AntiderivativeTable {
    fn build(a: &ScalarFn, lo: f64, hi: f64) -> Self {
        let step = TABLE_STEP;
        let n_left = (-lo / step).ceil() as usize;
        let n_right = (hi / step).ceil() as usize;
        let nodes: Vec<f64> = (0..=n_left + n_right)
            .map(|j| (j as f64 - n_left as f64) * step)
            .collect();
        let mut values = vec![0.0; nodes.len()];
        let f = |s: f64| a(s);
        for j in n_left + 1..nodes.len() {
            values[j] = values[j - 1] + adaptive_simpson(&f, nodes[j - 1], nodes[j], CELL_TOL);
        }
        for j in (0..n_left).rev() {
            values[j] = values[j + 1] - adaptive_simpson(&f, nodes[j], nodes[j + 1], CELL_TOL);
        }
        let slopes = nodes.iter().map(|&s| a(s)).collect();
        Self {
            lo: nodes[0],
            hi: *nodes.last().unwrap(),
            step,
            nodes,
            values,
            slopes,
        }
    }

    fn eval(&self, a: &ScalarFn, s: f64) -> f64 {
        if s < self.lo {
            return self.values[0] - adaptive_simpson(&|t| a(t), s, self.lo, CELL_TOL);
        }
        if s > self.hi {
            return *self.values.last().unwrap() + adaptive_simpson(&|t| a(t), self.hi, s, CELL_TOL);
        }
        let j = self.cell(s);
        self.hermite(j, s).0
    }

    fn cell(&self, s: f64) -> usize {
        let rel = (s - self.lo) / self.step;
        (rel.floor() as usize).min(self.nodes.len() - 2)
    }

    /// Value and derivative of the Hermite cubic on cell `j`.
    fn hermite(&self, j: usize, s: f64) -> (f64, f64) {
        let h = self.step;
        let u = (s - self.nodes[j]) / h;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.slopes[j] * h, self.slopes[j + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        let deriv = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h;
        (value, deriv)
    }

    fn invert(&self, a: &ScalarFn, z: f64) -> Result<f64> {
        let z_lo = self.values[0];
        let z_hi = *self.values.last().unwrap();
        if z == 0.0 {
            return Ok(0.0);
        }
        if (z_lo..=z_hi).contains(&z) {
            // Bracket by binary search on the monotone node values.
            let j = match self
                .values
                .binary_search_by(|v| v.partial_cmp(&z).expect("finite table"))
            {
                Ok(j) => return Ok(self.nodes[j]),
                Err(j) => j - 1,
            };
            let (mut left, mut right) = (self.nodes[j], self.nodes[j + 1]);
            let mut s = left + (z - self.values[j]) / self.slopes[j].max(1e-300);
            if !(left..=right).contains(&s) {
                s = 0.5 * (left + right);
            }
            for _ in 0..100 {
                let (v, d) = self.hermite(j, s);
                let r = v - z;
                if r.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
                if r > 0.0 {
                    right = s;
                } else {
                    left = s;
                }
                let newton = s - r / d;
                s = if d > 0.0 && newton > left && newton < right {
                    newton
                } else {
                    0.5 * (left + right)
                };
                if right - left < 1e-16 {
                    break;
                }
            }
            return Ok(s);
        }
        // Extension: twice the half-widths, evaluated by direct quadrature.
        let ext_lo = 2.0 * self.lo;
        let ext_hi = 2.0 * self.hi;
        let e_lo = self.eval(a, ext_lo);
        let e_hi = self.eval(a, ext_hi);
        if z < e_lo || z > e_hi {
            return Err(Error::InverseLookupFailure { z, lo: e_lo, hi: e_hi });
        }
        let (mut left, mut right) = if z > z_hi { (self.hi, ext_hi) } else { (ext_lo, self.lo) };
        let mut s = 0.5 * (left + right);
        for _ in 0..200 {
            let r = self.eval(a, s) - z;
            if r.abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
            if r > 0.0 {
                right = s;
            } else {
                left = s;
            }
            let newton = s - r / a(s);
            s = if newton > left && newton < right {
                newton
            } else {
                0.5 * (left + right)
            };
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_plus_sin() -> DiffusionSpec {
        DiffusionSpec::build(
            Arc::new(|s: f64| 2.0 + s.sin()),
            Arc::new(|s: f64| s.cos()),
            (-5.0, 5.0),
            2001,
        )
        .unwrap()
    }

    #[test]
    fn identity_case() {
        let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
        let raw = spec.sampled_bounds();
        assert_eq!(raw.min_a, 1.0);
        assert_eq!(raw.max_a, 1.0);
        assert_eq!(spec.m_bound(), 0.0);
        for s in [-1.7, -0.3, 0.0, 0.4, 1.99] {
            assert!((spec.antiderivative(s) - s).abs() < 1e-14);
            assert!((spec.inverse_antiderivative(s).unwrap() - s).abs() < 1e-14);
        }
    }

    #[test]
    fn two_plus_sin_bounds_and_antiderivative() {
        let spec = two_plus_sin();
        let raw = spec.sampled_bounds();
        assert!((raw.min_a - 1.0).abs() < 1e-4);
        assert!((raw.max_a - 3.0).abs() < 1e-4);
        assert!((raw.max_abs_a_prime - 1.0).abs() < 1e-4);
        assert!(spec.rho() < raw.min_a && spec.kappa() > raw.max_a);
        // Exact antiderivative 2s + 1 - cos s.
        for s in [-4.9_f64, -2.0, -0.01, 0.0, 0.37, 2.0, 4.99] {
            let exact = 2.0 * s + 1.0 - s.cos();
            assert!((spec.antiderivative(s) - exact).abs() < 1e-10, "s = {s}");
        }
        assert!((spec.antiderivative(2.0) - 5.416_146_836_547_142).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_coefficient() {
        let err = DiffusionSpec::constant(-1.0, (-1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::RejectedCoefficient { .. }));
    }

    #[test]
    fn inverse_inside_and_extended() {
        let spec = two_plus_sin();
        for s in [-4.0, -0.5, 0.001, 3.3] {
            let z = spec.antiderivative(s);
            assert!((spec.inverse_antiderivative(z).unwrap() - s).abs() < 1e-11);
        }
        // Beyond the table but within the single extension.
        let s: f64 = 7.5;
        let z = 2.0 * s + 1.0 - s.cos();
        assert!((spec.inverse_antiderivative(z).unwrap() - s).abs() < 1e-9);
        // Beyond the extension.
        assert!(matches!(
            spec.inverse_antiderivative(1e3),
            Err(Error::InverseLookupFailure { .. })
        ));
    }

    #[test]
    fn lipschitz_bounds_of_antiderivative() {
        let spec = two_plus_sin();
        let pts: Vec<f64> = (0..41).map(|j| -4.0 + 0.2 * j as f64).collect();
        for &s1 in &pts {
            for &s2 in &pts {
                let d = (spec.antiderivative(s1) - spec.antiderivative(s2)).abs();
                let gap = (s1 - s2).abs();
                assert!(d >= spec.rho() * gap - 1e-12);
                assert!(d <= spec.kappa() * gap + 1e-12);
            }
        }
    }
}
