//! Auxiliary function ψ, Carleman weights `β`, `φ` and weighted norms.
//!
//! `β(x, t) = (e^{λψ(x)} - e^{2λ||ψ||}) / (t (T - t))`, `φ(x, t) = e^{λψ(x)} / (t (T - t))`.
//! Both are singular at `t = 0, T`; those levels are flagged as weight-infinite and every
//! weighted control vanishes there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{norms, Grid, Interval, SourceField, SpaceTimeField};
use crate::rng::{seeded, SinePolynomial};

/// Default Carleman parameter of the weight fields.
pub const DEFAULT_S: f64 = 4.0;

/// C² cubic reparameterization `m` of `[0, 1]` through `(0, 0)`, `(c, ½)`, `(1, 1)`,
/// stored as two Hermite pieces with slopes `d0`, `dc`, `d1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Reparam {
    c: f64,
    d0: f64,
    dc: f64,
    d1: f64,
}

impl Reparam {
    /// Natural spline: `m'' = 0` at both ends. Identity for `c = ½`.
    fn natural(c: f64) -> Self {
        let (h1, h2) = (c, 1.0 - c);
        let (s1, s2) = (0.5 / h1, 0.5 / h2);
        let dc = (s1 / h1 + s2 / h2) / (1.0 / h1 + 1.0 / h2);
        Self {
            c,
            d0: 0.5 * (3.0 * s1 - dc),
            dc,
            d1: 0.5 * (3.0 * s2 - dc),
        }
    }

    /// End slopes `γ` times the piece secants; the middle slope restores C² at `c`.
    fn clamped(c: f64, gamma: f64) -> Self {
        let (h1, h2) = (c, 1.0 - c);
        let (s1, s2) = (0.5 / h1, 0.5 / h2);
        let (d0, d1) = (gamma * s1, gamma * s2);
        let dc = (6.0 * s2 / h2 - 2.0 * d1 / h2 + 6.0 * s1 / h1 - 2.0 * d0 / h1) / (4.0 / h1 + 4.0 / h2);
        Self { c, d0, dc, d1 }
    }

    /// `(m, m', m'')` at `x`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (x0, h, y0, s0, s1) = if x <= self.c {
            (0.0, self.c, 0.0, self.d0, self.dc)
        } else {
            (self.c, 1.0 - self.c, 0.5, self.dc, self.d1)
        };
        let y1 = y0 + 0.5;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let m = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * s0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * s1;
        let dm = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * s0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * h * s1)
            / h;
        let ddm = ((12.0 * t - 6.0) * y0
            + (6.0 * t - 4.0) * h * s0
            + (-12.0 * t + 6.0) * y1
            + (6.0 * t - 2.0) * h * s1)
            / (h * h);
        (m, dm, ddm)
    }
}

/// `ψ = q ∘ m` with `q(x) = x (1 - x)`, tabulated on a solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    map: Reparam,
    omega0: Interval,
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    min_abs_grad_outside: f64,
}

impl PsiFunction {
    /// `(ψ, ψ', ψ'')` at any `x ∈ [0, 1]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (m, dm, ddm) = self.map.eval(x);
        let q1 = 1.0 - 2.0 * m;
        (m * (1.0 - m), q1 * dm, -2.0 * dm * dm + q1 * ddm)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_derivative(&self) -> &[f64] {
        &self.d1
    }

    pub fn second_derivative(&self) -> &[f64] {
        &self.d2
    }

    pub fn omega0(&self) -> Interval {
        self.omega0
    }

    /// `min |ψ'|` over `[0, 1] \ ω0` on the verification grid.
    pub fn min_abs_grad_outside(&self) -> f64 {
        self.min_abs_grad_outside
    }

    /// `||ψ||_{C([0,1])}`; the maximum `q(½) = ¼` is attained at the midpoint of `ω0`.
    pub fn sup_norm(&self) -> f64 {
        0.25
    }

    /// Critical point of ψ.
    pub fn critical_point(&self) -> f64 {
        self.map.c
    }

    fn tabulate(map: Reparam, omega0: Interval, grid: &Grid, min_grad: f64) -> Self {
        let mut out = Self {
            map,
            omega0,
            values: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            min_abs_grad_outside: min_grad,
        };
        for i in 0..grid.n_nodes() {
            let (v, d, dd) = out.eval(grid.x(i));
            out.values.push(v);
            out.d1.push(d);
            out.d2.push(dd);
        }
        let last = out.values.len() - 1;
        out.values[0] = 0.0;
        out.values[last] = 0.0;
        out
    }

    /// Same function tabulated on another grid.
    pub fn on_grid(&self, grid: &Grid) -> Self {
        Self::tabulate(self.map, self.omega0, grid, self.min_abs_grad_outside)
    }
}

/// Checks positivity and `|ψ'| > 0` off `ω0` on `n_fine + 1` points; returns `min |ψ'|` off `ω0`.
fn verify(map: Reparam, omega0: Interval, n_fine: usize) -> Option<f64> {
    let probe = PsiFunction {
        map,
        omega0,
        values: vec![],
        d1: vec![],
        d2: vec![],
        min_abs_grad_outside: 0.0,
    };
    let (v0, _, _) = probe.eval(0.0);
    let (v1, _, _) = probe.eval(1.0);
    if v0.abs() > 1e-14 || v1.abs() > 1e-14 {
        return None;
    }
    let mut min_grad = f64::INFINITY;
    let points = (0..=n_fine).map(|j| j as f64 / n_fine as f64).chain([omega0.lo, omega0.hi]);
    for x in points {
        let (m, dm, _) = map.eval(x);
        if dm <= 0.0 || !(0.0..=1.0).contains(&m) {
            return None;
        }
        let (v, d, _) = probe.eval(x);
        if x > 0.0 && x < 1.0 && !(v > 0.0) {
            return None;
        }
        if !omega0.contains(x) {
            min_grad = min_grad.min(d.abs());
        }
    }
    (min_grad > 0.0).then_some(min_grad)
}

/// Builds ψ whose only critical point is the midpoint of `omega0`. The natural spline is
/// tried first, then up to five clamped splines with steeper end tangents.
pub fn construct_psi(omega0: Interval, grid: &Grid) -> Result<PsiFunction> {
    if !omega0.is_compactly_inside_unit() {
        return Err(Error::InvalidInput(format!(
            "closure of ({}, {}) must lie inside (0, 1)",
            omega0.lo, omega0.hi
        )));
    }
    let c = omega0.midpoint();
    let n_fine = 8 * (grid.n_x() + 1);
    let candidates = std::iter::once(Reparam::natural(c))
        .chain([1.5, 2.0, 2.25, 2.5, 2.75].into_iter().map(|g| Reparam::clamped(c, g)));
    for map in candidates {
        if let Some(min_grad) = verify(map, omega0, n_fine) {
            return Ok(PsiFunction::tabulate(map, omega0, grid, min_grad));
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no monotone reparameterization found for critical point {c}"
    )))
}

/// Tabulated `β`, `φ` and the control weight `e^{2sβ} φ³`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanWeights {
    psi: PsiFunction,
    lambda: f64,
    s: f64,
    delta0: f64,
    beta: SpaceTimeField,
    phi: SpaceTimeField,
    log_control: SpaceTimeField,
}

pub fn build_weights(psi: &PsiFunction, lambda: f64, s: f64, grid: &Grid) -> Result<CarlemanWeights> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput("λ must be positive".into()));
    }
    if lambda * psi.sup_norm() < 2.0 - 1e-12 {
        return Err(Error::ParameterRejected(format!(
            "λ||ψ|| = {} < 2",
            lambda * psi.sup_norm()
        )));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput("s must be positive".into()));
    }
    if grid.n_t() < 4 {
        return Err(Error::InvalidInput("Carleman weights need n_t >= 4".into()));
    }
    let psi = psi.on_grid(grid);
    let horizon = grid.horizon();
    let top = (2.0 * lambda * psi.sup_norm()).exp();
    let mut beta = SpaceTimeField::constant(*grid, f64::NEG_INFINITY);
    let mut phi = SpaceTimeField::constant(*grid, f64::INFINITY);
    let mut log_control = SpaceTimeField::constant(*grid, f64::NEG_INFINITY);
    for k in 1..grid.n_t() {
        let t = grid.t(k);
        let denom = t * (horizon - t);
        for (i, &p) in psi.values().iter().enumerate() {
            let e = (lambda * p).exp();
            let b = (e - top) / denom;
            let f = e / denom;
            beta.level_mut(k)[i] = b;
            phi.level_mut(k)[i] = f;
            log_control.level_mut(k)[i] = 2.0 * s * b + 3.0 * f.ln();
        }
    }
    Ok(CarlemanWeights {
        psi,
        lambda,
        s,
        delta0: 0.25 * s,
        beta,
        phi,
        log_control,
    })
}

impl CarlemanWeights {
    /// Defaults `λ = 2 / ||ψ||` and `s = 4`.
    pub fn with_defaults(psi: &PsiFunction, grid: &Grid) -> Result<Self> {
        build_weights(psi, 2.0 / psi.sup_norm(), DEFAULT_S, grid)
    }

    pub fn psi(&self) -> &PsiFunction {
        &self.psi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn grid(&self) -> &Grid {
        self.beta.grid()
    }

    /// Endpoint time levels, where `β = -∞` and `φ = +∞`.
    pub fn is_weight_infinite(&self, k: usize) -> bool {
        k == 0 || k == self.grid().n_t()
    }

    pub fn beta(&self) -> &SpaceTimeField {
        &self.beta
    }

    pub fn phi(&self) -> &SpaceTimeField {
        &self.phi
    }

    /// `ln(e^{2sβ} φ³)`, `-∞` on weight-infinite levels.
    pub fn log_control_weight(&self) -> &SpaceTimeField {
        &self.log_control
    }

    /// `e^{2sβ} φ³`, zero on weight-infinite levels.
    pub fn control_weight(&self) -> SpaceTimeField {
        self.log_control.map(f64::exp)
    }

    /// The same `ψ`, `λ`, `s` on another grid (e.g. a control window).
    pub fn for_grid(&self, grid: &Grid) -> Result<Self> {
        build_weights(&self.psi, self.lambda, self.s, grid)
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        build_weights(&self.psi, self.lambda, s, self.grid())
    }
}

/// `∬ e^{-2sβ} φ^{-3} u²` with the trapezoid rule; weight-infinite levels contribute 0.
pub fn weighted_control_norm(u: &SpaceTimeField, w: &CarlemanWeights) -> Result<f64> {
    if u.grid() != w.grid() {
        return Err(Error::InvalidInput("control and weights live on different grids".into()));
    }
    let g = u.grid();
    let mut total = 0.0;
    for k in 1..g.n_t() {
        let lw = w.log_control.level(k);
        let level: f64 = u
            .level(k)
            .iter()
            .zip(lw)
            .filter(|(v, _)| **v != 0.0)
            .map(|(v, l)| v * v * (-l).exp())
            .sum();
        total += level;
    }
    Ok(total * g.dx() * g.dt())
}

/// Summary of the empirical observability constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub all_finite: bool,
    /// `||b_x||_∞`.
    pub b_x_linf: f64,
    /// `||√t b_t||_∞`.
    pub sqrt_t_b_t_linf: f64,
}

/// Number of sine modes in each random terminal datum.
pub const PROBE_MODES: usize = 8;

/// Ratios `∫ p(x, 0)² / ∬_ω e^{2sβ} φ³ p²` for `n_samples` random unit terminal data.
pub fn observability_probe(
    b: &SourceField,
    w: &CarlemanWeights,
    omega: Interval,
    n_samples: usize,
    seed: u64,
) -> Result<ProbeStats> {
    let grid = *b.grid();
    if w.grid() != &grid {
        return Err(Error::InvalidInput("coefficient and weights live on different grids".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("probe needs at least one sample".into()));
    }
    let frozen = crate::pde::FrozenCoefficient::from_nodal(b)?;
    let weight = w.control_weight();
    let mask = omega.mask(&grid);
    let mut rng = seeded(seed);
    let mut ratios = Vec::with_capacity(n_samples);
    while ratios.len() < n_samples {
        let poly = SinePolynomial::random(&mut rng, PROBE_MODES);
        let norm = poly.l2_norm();
        if !(norm > 0.0) {
            continue;
        }
        let p_t = grid.sample(|x| poly.eval(x) / norm);
        let p = frozen.solve_adjoint(&p_t, None)?;
        let num = norms::l2_sq(p.level(0), grid.dx());
        let mut den = 0.0;
        for k in 1..grid.n_t() {
            den += p
                .level(k)
                .iter()
                .zip(weight.level(k))
                .zip(&mask)
                .map(|((v, wt), m)| m * wt * v * v)
                .sum::<f64>();
        }
        den *= grid.dx() * grid.dt();
        ratios.push(num / den);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_ratio = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let (b_x_linf, sqrt_t_b_t_linf) = coefficient_smoothness(b);
    Ok(ProbeStats {
        all_finite: ratios.iter().all(|r| r.is_finite()),
        max_ratio: sorted[sorted.len() - 1],
        median_ratio,
        ratios,
        b_x_linf,
        sqrt_t_b_t_linf,
    })
}

/// `(||b_x||_∞, ||√t b_t||_∞)` with centered space and backward time differences.
pub fn coefficient_smoothness(b: &SourceField) -> (f64, f64) {
    let g = b.grid();
    let bx = b
        .levels()
        .map(|l| norms::linf(&norms::derivative(l, g.dx())))
        .fold(0.0, f64::max);
    let mut bt: f64 = 0.0;
    for k in 1..g.n_levels() {
        let scale = g.t(k).sqrt() / g.dt();
        for (a, c) in b.level(k).iter().zip(b.level(k - 1)) {
            bt = bt.max(scale * (a - c).abs());
        }
    }
    (bx, bt)
}
