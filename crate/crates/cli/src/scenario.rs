//! Scenario files: TOML schema, defaults, validation and resolution into solver inputs.

use std::path::Path;

use qparctl_core::carleman::{construct_psi, PsiFunction};
use qparctl_core::estimates::GnConstant;
use qparctl_core::families::{DiffusionFamily, InitialFamily, ReactionFamily, ThetaFamily};
use qparctl_core::mult_control::{CarlemanSetup, PipelineParams, ReactionSpec, TimeOptimalParams};
use qparctl_core::null_control::{FixedPointParams, PenaltyParams, SChoice};
use qparctl_core::pde::{norms, DiffusionSpec, Grid, Interval};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Half-width `S` of the certified state range `[-S, S]`; defaults to
    /// `max(4 sup|y0|, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bound: Option<f64>,
    /// Free evolution before the additive control starts (`null-control` only).
    #[serde(default)]
    pub control_delay: f64,
    #[serde(default = "default_omega")]
    pub omega: Interval,
    #[serde(default = "default_omega0")]
    pub omega0: Interval,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "DiffusionFamily::two_plus_sin")]
    pub diffusion: DiffusionFamily,
    #[serde(default)]
    pub reaction: ReactionConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub estimates: EstimatesConfig,
    #[serde(default)]
    pub carleman: CarlemanConfig,
    #[serde(default)]
    pub penalty: PenaltyParams,
    #[serde(default)]
    pub fixed_point: FixedPointParams,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_optimal: Option<TimeOptimalConfig>,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_omega() -> Interval {
    Interval { lo: 0.3, hi: 0.7 }
}

fn default_omega0() -> Interval {
    Interval { lo: 0.4, hi: 0.6 }
}

impl Default for Scenario {
    fn default() -> Self {
        toml::from_str("").expect("empty scenario uses defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Interior nodes; `dx = 1 / (n_x + 1)`.
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_x: 64,
            n_t: 256,
            horizon: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactionConfig {
    pub g: ReactionFamily,
    pub theta: ThetaFamily,
    pub theta0: f64,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        Self {
            g: ReactionFamily::square(),
            theta: ThetaFamily::Constant { value: 1.0 },
            theta0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub profile: InitialFamily,
    pub amplitude: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            profile: InitialFamily::sine(),
            amplitude: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesConfig {
    /// Gagliardo–Nirenberg constant.
    pub c0: f64,
    /// `H¹` threshold for the observed waiting time.
    pub eta: f64,
    /// Random test functions used to validate `c0`.
    pub gn_samples: usize,
}

impl Default for EstimatesConfig {
    fn default() -> Self {
        Self {
            c0: GnConstant::default().value(),
            eta: 0.05,
            gn_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub lambda: f64,
    /// `"auto"`, `{ fixed = s }` or `{ scaled = c }` for `s = c T²`.
    pub s: SChoice,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            lambda: 8.0,
            s: SChoice::Auto,
        }
    }
}

/// Multiplicative pipeline; the spatial grid comes from `[grid]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_ctrl: usize,
    pub t3: f64,
    pub t2_init: f64,
    pub max_doublings: usize,
    pub terminal_rel_tol: f64,
    /// Extra runs with the waiting time doubled after the first success.
    pub refinements: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            n_ctrl: p.n_ctrl,
            t3: p.t3,
            t2_init: p.t2_init,
            max_doublings: p.max_doublings,
            terminal_rel_tol: p.terminal_rel_tol,
            refinements: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeOptimalConfig {
    pub sigma: f64,
    #[serde(default = "one")]
    pub t_hi: f64,
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    /// `||y(T)|| <= terminal_rel_tol ||y0||` counts as reaching zero.
    #[serde(default = "default_terminal_rel_tol")]
    pub terminal_rel_tol: f64,
    /// Time steps at `t_hi`.
    #[serde(default = "default_search_steps")]
    pub n_steps: usize,
}

fn one() -> f64 {
    1.0
}

fn default_bisect_tol() -> f64 {
    0.02
}

fn default_terminal_rel_tol() -> f64 {
    1e-3
}

fn default_search_steps() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub n_samples: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Every `slab_stride`-th time level goes to `slab.csv` (the last level always does).
    pub slab_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { slab_stride: 4 }
    }
}

/// Solver-ready view of a validated scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: DiffusionSpec,
    pub grid: Grid,
    pub y0: Vec<f64>,
    pub omega: Interval,
    pub reaction: ReactionSpec,
    pub psi: PsiFunction,
    pub c0: GnConstant,
    pub pipeline: PipelineParams,
}

impl Resolved {
    pub fn carleman_setup(&self, s: &Scenario) -> CarlemanSetup {
        CarlemanSetup {
            psi: self.psi.clone(),
            lambda: s.carleman.lambda,
            s: s.carleman.s,
        }
    }

    pub fn time_optimal(&self, s: &Scenario) -> Option<(PipelineParams, TimeOptimalParams)> {
        let top = s.time_optimal.as_ref()?;
        let params = PipelineParams {
            n_ctrl: top.n_steps,
            ..self.pipeline.clone()
        };
        let y0_norm = norms::l2(&self.y0, self.grid.dx());
        Some((
            params,
            TimeOptimalParams {
                sigma: top.sigma,
                t_hi: top.t_hi,
                bisect_tol: top.bisect_tol,
                terminal_tol: top.terminal_rel_tol * y0_norm,
            },
        ))
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn core(field: &str) -> impl Fn(qparctl_core::Error) -> CliError + '_ {
    move |e| invalid(format!("{field}: {e}"))
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|sp| text[..sp.start].lines().count().max(1)).unwrap_or(0);
            CliError::Parse {
                origin: origin.into(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Checks every invariant and builds the solver inputs.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        for (name, iv) in [("omega", self.omega), ("omega0", self.omega0)] {
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(invalid(format!("{name} = ({}, {}) is empty", iv.lo, iv.hi)));
            }
        }
        if !self.omega.is_compactly_inside_unit() {
            return Err(invalid("omega must lie strictly inside (0, 1)"));
        }
        if !self.omega0.closure_inside(&self.omega) {
            return Err(invalid(format!(
                "closure of omega0 = ({}, {}) is not inside omega = ({}, {})",
                self.omega0.lo, self.omega0.hi, self.omega.lo, self.omega.hi
            )));
        }
        let g = &self.grid;
        let grid = Grid::new(g.n_x, g.n_t, g.horizon).map_err(core("grid"))?;
        if !self.initial.amplitude.is_finite() {
            return Err(invalid("initial.amplitude must be finite"));
        }
        let y0 = self
            .initial
            .profile
            .sample(&grid, self.initial.amplitude, self.seed)
            .map_err(core("initial"))?;
        let bound = match self.state_bound {
            Some(b) if b > 0.0 && b.is_finite() => b,
            Some(b) => return Err(invalid(format!("state_bound = {b} must be positive"))),
            None => (4.0 * norms::linf(&y0)).max(1.0),
        };
        let spec = self.diffusion.build(bound).map_err(core("diffusion"))?;
        let reaction = ReactionSpec::new(
            self.reaction.g.function().map_err(core("reaction.g"))?,
            self.reaction.theta.function(),
            self.reaction.theta0,
        )
        .map_err(core("reaction"))?;
        let psi = construct_psi(self.omega0, &grid).map_err(core("omega0"))?;
        if !(self.carleman.lambda * psi.sup_norm() >= 2.0 - 1e-12) {
            return Err(invalid(format!(
                "carleman.lambda = {} is below 2 / ||psi|| = {}",
                self.carleman.lambda,
                2.0 / psi.sup_norm()
            )));
        }
        match self.carleman.s {
            SChoice::Fixed(v) | SChoice::Scaled(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(invalid("carleman.s must be positive"));
            }
            _ => {}
        }
        if !(self.control_delay >= 0.0 && self.control_delay < g.horizon) {
            return Err(invalid("control_delay must lie in [0, horizon)"));
        }
        self.penalty.validate().map_err(core("penalty"))?;
        self.fixed_point.validate().map_err(core("fixed_point"))?;
        let c0 = GnConstant::new(self.estimates.c0).map_err(core("estimates.c0"))?;
        if !(self.estimates.eta > 0.0) {
            return Err(invalid("estimates.eta must be positive"));
        }
        let p = &self.pipeline;
        let pipeline = PipelineParams {
            n_x: g.n_x,
            n_ctrl: p.n_ctrl,
            t3: p.t3,
            t2_init: p.t2_init,
            max_doublings: p.max_doublings,
            terminal_rel_tol: p.terminal_rel_tol,
            c0,
        };
        pipeline.validate().map_err(core("pipeline"))?;
        if self.probe.n_samples == 0 {
            return Err(invalid("probe.n_samples must be >= 1"));
        }
        if self.output.slab_stride == 0 {
            return Err(invalid("output.slab_stride must be >= 1"));
        }
        let resolved = Resolved {
            spec,
            grid,
            y0,
            omega: self.omega,
            reaction,
            psi,
            c0,
            pipeline,
        };
        if let Some((params, top)) = resolved.time_optimal(self) {
            top.validate().map_err(core("time_optimal"))?;
            PipelineParams { t3: top.t_hi, ..params }
                .validate()
                .map_err(core("time_optimal"))?;
        }
        Ok(resolved)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let scenario = Scenario::from_toml(&text, &path.display().to_string())?;
    scenario.resolve()?;
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, scenario.to_toml()).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
