//! Command bodies. Each declares its tables up front so a failed run still leaves
//! headers-only CSVs next to a summary carrying the error record.

use clap::ValueEnum;
use qparctl_core::carleman::{build_weights, observability_probe};
use qparctl_core::estimates::{
    h1_decay_report, linf_decay_report, max_modulus_bound, regularity_ratio, smallness_gate, smallness_times,
    t1_theory,
};
use qparctl_core::mult_control::{multiplicative_pipeline, time_optimal_search, wait_refinement, MultPipelineResult};
use qparctl_core::null_control::{
    fixed_point_null_control, resolve_weights, staged_control, LqProblem, SChoice,
};
use qparctl_core::pde::{norms, solve_free, FrozenCoefficient, SourceField};
use serde_json::{json, Map, Value};

use crate::artifact::{fill_slab, fill_timeseries, Artifact, Table, SLAB_HEADER, TIMESERIES_HEADER};
use crate::error::CliError;
use crate::scenario::{Resolved, Scenario};

/// Seed of the Gramian symmetry self-test.
const SYMMETRY_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    DecayReport,
    NullControl,
    MultControl,
    TimeOptimal,
    ObservabilityProbe,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::DecayReport => "decay-report",
            Command::NullControl => "null-control",
            Command::MultControl => "mult-control",
            Command::TimeOptimal => "time-optimal",
            Command::ObservabilityProbe => "observability-probe",
            Command::Validate => "validate",
        }
    }

    fn tables(self) -> Vec<Table> {
        let ts = || Table::new("timeseries.csv", &TIMESERIES_HEADER);
        let slab = || Table::new("slab.csv", &SLAB_HEADER);
        match self {
            Command::Validate => vec![],
            Command::Simulate | Command::MultControl => vec![ts(), slab()],
            Command::DecayReport => vec![ts()],
            Command::NullControl => vec![ts(), slab(), Table::new("weights.csv", &["x", "t", "log_weight"])],
            Command::TimeOptimal => vec![
                ts(),
                slab(),
                Table::new(
                    "trials.csv",
                    &["horizon", "steps", "feasible", "candidates", "best_linf_u", "best_terminal_norm"],
                ),
            ],
            Command::ObservabilityProbe => vec![Table::new("probe.csv", &["sample", "ratio"])],
        }
    }
}

/// Runs `command` on `scenario`. Never fails: errors end up in the artifact.
pub fn run_scenario(command: Command, scenario: &Scenario) -> Artifact {
    let mut art = Artifact::new(command.name(), scenario);
    art.tables = command.tables();
    let outcome = scenario.resolve().and_then(|r| match command {
            Command::Validate => validate(&mut art, &r),
            Command::Simulate => simulate(&mut art, scenario, &r),
            Command::DecayReport => decay_report(&mut art, scenario, &r),
            Command::NullControl => null_control(&mut art, scenario, &r),
            Command::MultControl => mult_control(&mut art, scenario, &r),
            Command::TimeOptimal => time_optimal(&mut art, scenario, &r),
        Command::ObservabilityProbe => probe(&mut art, scenario, &r),
    });
    if let Err(e) = outcome {
        art.record_error(&e);
    }
    art
}

fn coefficient_bounds(art: &mut Artifact, r: &Resolved) {
    let spec = &r.spec;
    art.set("rho", spec.rho());
    art.set("kappa", spec.kappa());
    art.set("m_bound", spec.m_bound());
    let sampled = spec.sampled_bounds();
    art.set(
        "sampled_bounds",
        json!({ "min_a": sampled.min_a, "max_a": sampled.max_a, "max_abs_a_prime": sampled.max_abs_a_prime }),
    );
    art.set("state_range", spec.sample_range());
    art.set("t1_theory", t1_theory(spec, r.c0));
    art.set("smallness_gate", smallness_gate(spec, r.c0));
    let dx = r.grid.dx();
    art.set("y0_l2", norms::l2(&r.y0, dx));
    art.set("y0_h1", norms::h1(&r.y0, dx));
    art.set("y0_linf", norms::linf(&r.y0));
    art.set("dx", dx);
    art.set("dt", r.grid.dt());
}

fn validate(art: &mut Artifact, r: &Resolved) -> Result<(), CliError> {
    art.set("valid", true);
    coefficient_bounds(art, r);
    art.set("psi_sup_norm", r.psi.sup_norm());
    art.set("psi_min_grad_outside", r.psi.min_abs_grad_outside());
    Ok(())
}

fn simulate(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    coefficient_bounds(art, r);
    let traj = solve_free(&r.y0, &r.grid, &r.spec)?;
    let dx = r.grid.dx();
    art.set("terminal_l2", norms::l2(traj.terminal(), dx));
    art.set("terminal_linf", norms::linf(traj.terminal()));
    art.set("max_abs", traj.max_abs());
    fill_timeseries(art.table_mut("timeseries.csv"), &traj, &r.spec, None);
    fill_slab(art.table_mut("slab.csv"), &traj, None, s.output.slab_stride);
    Ok(())
}

fn decay_report(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    coefficient_bounds(art, r);
    let traj = solve_free(&r.y0, &r.grid, &r.spec)?;
    fill_timeseries(art.table_mut("timeseries.csv"), &traj, &r.spec, None);
    let dx = r.grid.dx();
    let y0_l2 = norms::l2(&r.y0, dx);

    let linf = linf_decay_report(&traj, &r.spec, y0_l2);
    art.set("monotone_violation", linf.monotone_violation);
    art.set("bound_violation", linf.bound_violation);
    art.set("slack", linf.slack);
    art.set("linf_checks_pass", linf.linf_checks_pass());

    let bound = max_modulus_bound(&r.y0, &SourceField::zeros(r.grid), &r.spec);
    art.set("max_modulus_bound", bound);
    art.set("max_modulus_pass", traj.max_abs() <= bound + linf.slack);

    let h1 = h1_decay_report(&traj, &r.spec, r.c0)?;
    art.set("gate_index", h1.gate_index);
    art.set("h1_rate_estimate", h1.h1_rate_estimate);
    art.set("h1_rate_bound", h1.h1_rate_bound);
    art.set("h1_check_passes", h1.h1_check_passes(r.spec.rho()));
    art.set("degenerate", h1.degenerate);

    let t0 = 0.5 * r.grid.horizon();
    art.set("regularity_t0", t0);
    art.set("regularity_ratio", regularity_ratio(&traj, &r.spec, t0)?);
    art.set("gn_validation", r.c0.validate(s.estimates.gn_samples, s.seed));
    // Never reaching the thresholds is a finding, not a failure.
    match smallness_times(&traj, &r.spec, r.c0, s.estimates.eta) {
        Ok(t) => art.set("smallness_times", t),
        Err(e) => art.set("smallness_times", json!({ "error": e.to_string() })),
    }
    Ok(())
}

fn null_control(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    let (grid, dx) = (r.grid, r.grid.dx());
    let pp = &s.penalty;
    let lambda = s.carleman.lambda;
    let y0_l2 = norms::l2(&r.y0, dx);
    art.set("y0_l2", y0_l2);
    art.set("control_delay", s.control_delay);

    let k0 = (s.control_delay / grid.dt()).round() as usize;
    let (control, state, report, window) = if k0 == 0 {
        let (w, tuning) = weights(s, r, &grid, &r.y0)?;
        art.set("s", w.s());
        art.set("tuning", tuning);
        let out = fixed_point_null_control(&r.y0, &grid, &r.spec, &w, r.omega, pp, &s.fixed_point)?;
        fill_weights(art.table_mut("weights.csv"), &w, s.output.slab_stride);
        let sym = symmetry(r, &out.state, &w)?;
        art.set("symmetry_defect", sym);
        (out.control.clone(), out.state.clone(), out.report.clone(), out)
    } else {
        // `s` is tuned for the control window, then tabulated on the full grid.
        let window_grid = grid.with_time(grid.n_t() - k0, grid.horizon() - grid.t(k0))?;
        let prefix = solve_free(&r.y0, &grid, &r.spec)?;
        let (w_window, tuning) = weights(s, r, &window_grid, prefix.level(k0))?;
        art.set("s", w_window.s());
        art.set("tuning", tuning);
        let w = build_weights(&r.psi, lambda, w_window.s(), &grid)?;
        fill_weights(art.table_mut("weights.csv"), &w, s.output.slab_stride);
        let out = staged_control(&r.y0, grid.t(k0), &grid, &r.spec, &w, r.omega, pp, &s.fixed_point)?;
        let sym = symmetry(r, &out.window.state, &w_window)?;
        art.set("symmetry_defect", sym);
        art.set("start_level", out.start_level);
        (out.control, out.state, out.report, out.window)
    };
    art.set("lambda", lambda);
    art.set("terminal_norm", report.terminal_norm);
    art.set("terminal_ratio", ratio(report.terminal_norm, y0_l2));
    art.set("c1_ratio", report.c1_ratio);
    art.set("c2_ratio", report.c2_ratio);
    art.set("l2_cost", report.l2_cost);
    art.set("linf_cost", report.linf_cost);
    art.set("k_membership", &report.k_membership);
    art.set("outer_iterations", window.outer_iterations);
    art.set("consistency", &window.consistency);
    art.set("step_distance", &window.step_distance);
    art.set("continuation", &window.continuation);
    art.set("linear_terminal_norm", window.linear_terminal_norm);
    fill_timeseries(art.table_mut("timeseries.csv"), &state, &r.spec, Some(&control));
    fill_slab(art.table_mut("slab.csv"), &state, Some(&control), s.output.slab_stride);
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Weights for `grid`. Tuning needs a nonzero state; from rest the smallest ladder
/// scale is used since no control is computed.
fn weights(
    s: &Scenario,
    r: &Resolved,
    grid: &qparctl_core::pde::Grid,
    start: &[f64],
) -> Result<(qparctl_core::carleman::CarlemanWeights, Option<qparctl_core::null_control::STuning>), CliError> {
    let choice = match s.carleman.s {
        SChoice::Auto if start.iter().all(|&v| v == 0.0) => {
            SChoice::Scaled(qparctl_core::null_control::S_LADDER[0])
        }
        other => other,
    };
    Ok(resolve_weights(
        choice,
        &r.psi,
        s.carleman.lambda,
        grid,
        r.spec.a(0.0),
        start,
        r.omega,
        &s.penalty,
    )?)
}

fn symmetry(
    r: &Resolved,
    state: &qparctl_core::pde::Trajectory,
    w: &qparctl_core::carleman::CarlemanWeights,
) -> Result<f64, CliError> {
    let problem = LqProblem::new(FrozenCoefficient::from_state(&r.spec, state), w, r.omega)?;
    Ok(problem.symmetry_defect(SYMMETRY_SEED)?)
}

fn fill_weights(table: &mut Table, w: &qparctl_core::carleman::CarlemanWeights, stride: usize) {
    let g = *w.grid();
    let log = w.log_control_weight();
    for k in (0..=g.n_t()).filter(|k| k % stride == 0 || *k == g.n_t()) {
        for i in 0..g.n_nodes() {
            table.push_f64(&[g.x(i), g.t(k), log.get(k, i)]);
        }
    }
}

fn pipeline_results(run: &MultPipelineResult) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.into(), v);
    };
    put("t1", json!(run.t1));
    put("t1_theory", json!(run.t1_theory));
    put("t1_observed", json!(run.t1_observed));
    put("t2", json!(run.t2));
    put("t3", json!(run.t3));
    put("horizon", json!(run.horizon()));
    put("control_start", json!(run.control_start()));
    put("terminal_norm", json!(run.terminal_norm));
    put("y0_norm", json!(run.y0_norm));
    put("terminal_ratio", json!(ratio(run.terminal_norm, run.y0_norm)));
    put("min_denominator", json!(run.min_denominator));
    put("g_linf", json!(run.g_linf));
    put("linf_u", json!(run.linf_u));
    put("identification_error", json!(run.identification_error));
    let g = run.grid;
    put("identification_budget", json!(5.0 * (g.dx().powi(2) + g.dt())));
    put("s", json!(run.s));
    put("tuning", serde_json::to_value(&run.tuning).unwrap());
    put("window_report", serde_json::to_value(&run.window_report).unwrap());
    put("outer_iterations", json!(run.outer_iterations));
    put("attempts", serde_json::to_value(&run.attempts).unwrap());
    put("dt", json!(g.dt()));
    put("n_t", json!(g.n_t()));
    m
}

fn add_pipeline_tables(art: &mut Artifact, r: &Resolved, run: &MultPipelineResult, stride: usize) {
    fill_timeseries(art.table_mut("timeseries.csv"), &run.state, &r.spec, Some(&run.control));
    fill_slab(art.table_mut("slab.csv"), &run.state, Some(&run.control), stride);
}

fn mult_control(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    let setup = r.carleman_setup(s);
    let args = (&r.y0, &r.spec, &r.reaction, r.omega, &setup, &s.penalty, &s.fixed_point, &r.pipeline);
    let runs = if s.pipeline.refinements == 0 {
        vec![multiplicative_pipeline(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7)?]
    } else {
        wait_refinement(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7, s.pipeline.refinements)?
    };
    let first = &runs[0];
    art.results.extend(pipeline_results(first));
    if runs.len() > 1 {
        let list: Vec<Value> = runs
            .iter()
            .map(|run| json!({ "t2": run.t2, "linf_u": run.linf_u, "terminal_norm": run.terminal_norm }))
            .collect();
        art.set("refinements", list);
        art.set("linf_u_strictly_decreasing", runs.windows(2).all(|p| p[1].linf_u < p[0].linf_u));
    }
    add_pipeline_tables(art, r, first, s.output.slab_stride);
    Ok(())
}

fn time_optimal(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    let (params, top) = r
        .time_optimal(s)
        .ok_or_else(|| CliError::Validation("time-optimal needs a [time_optimal] table".into()))?;
    let setup = r.carleman_setup(s);
    art.set("sigma", top.sigma);
    art.set("t_hi", top.t_hi);
    art.set("bisect_tol", top.bisect_tol);
    art.set("terminal_tol", top.terminal_tol);
    let out = time_optimal_search(
        &r.y0,
        &r.spec,
        &r.reaction,
        r.omega,
        &setup,
        &s.penalty,
        &s.fixed_point,
        &params,
        &top,
    )?;
    art.set("t_star", out.t_star);
    art.set("dt", out.dt);
    art.set("anomaly", out.anomaly);
    art.set("below_record", &out.below_record);
    art.set("n_trials", out.trials.len());
    let trials = art.table_mut("trials.csv");
    for t in &out.trials {
        let best = t
            .candidates
            .iter()
            .filter(|c| c.error.is_none())
            .filter_map(|c| Some((c.linf_u?, c.terminal_norm?)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let (lu, tn) = best.map_or((String::new(), String::new()), |(a, b)| {
            (crate::artifact::fmt_f64(a), crate::artifact::fmt_f64(b))
        });
        trials.rows.push(vec![
            crate::artifact::fmt_f64(t.horizon),
            t.steps.to_string(),
            t.feasible.to_string(),
            t.candidates.len().to_string(),
            lu,
            tn,
        ]);
    }
    match &out.feasible_run {
        Some(run) => {
            let below_infeasible = out.below_record.as_ref().is_none_or(|b| !b.feasible);
            art.set(
                "certificate_ok",
                run.linf_u <= top.sigma && run.terminal_norm <= top.terminal_tol && below_infeasible,
            );
            art.set("certificate", pipeline_results(run));
            art.set("linf_u", run.linf_u);
            art.set("terminal_norm", run.terminal_norm);
            art.set("terminal_ratio", ratio(run.terminal_norm, run.y0_norm));
            add_pipeline_tables(art, r, run, s.output.slab_stride);
        }
        None => {
            // Already at rest: T* = 0 needs no control.
            art.set("certificate_ok", out.t_star == 0.0);
        }
    }
    Ok(())
}

fn probe(art: &mut Artifact, s: &Scenario, r: &Resolved) -> Result<(), CliError> {
    let traj = solve_free(&r.y0, &r.grid, &r.spec)?;
    let b = traj.map(|v| r.spec.a(v));
    let (w, tuning) = weights(s, r, &r.grid, &r.y0)?;
    art.set("s", w.s());
    art.set("lambda", w.lambda());
    art.set("tuning", tuning);
    let stats = observability_probe(&b, &w, r.omega, s.probe.n_samples, s.seed)?;
    art.set("n_samples", stats.ratios.len());
    art.set("max_ratio", stats.max_ratio);
    art.set("median_ratio", stats.median_ratio);
    art.set("all_finite", stats.all_finite);
    art.set("b_x_linf", stats.b_x_linf);
    art.set("sqrt_t_b_t_linf", stats.sqrt_t_b_t_linf);
    let table = art.table_mut("probe.csv");
    for (j, ratio) in stats.ratios.iter().enumerate() {
        table.rows.push(vec![j.to_string(), crate::artifact::fmt_f64(*ratio)]);
    }
    Ok(())
}
