//! Acceptance criteria A1–A9. Each test writes one `A<n> PASS|FAIL` line straight to
//! stdout (bypassing libtest capture) and then asserts the verdict.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qparctl_core::carleman::{build_weights, construct_psi, observability_probe};
use qparctl_core::estimates::*;
use qparctl_core::families::{DiffusionFamily, InitialFamily};
use qparctl_core::mult_control::*;
use qparctl_core::null_control::*;
use qparctl_core::pde::*;
use qparctl_core::rng::seeded;
use rand::Rng;

fn verdict(id: &str, pass: bool, elapsed: Duration, detail: String) {
    let line = emit(id, pass, elapsed, detail);
    assert!(pass, "{line}");
}

fn emit(id: &str, pass: bool, elapsed: Duration, detail: String) -> String {
    let line = format!(
        "{id} {} [{:.2}s] {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    line.trim_end().to_string()
}

fn omega() -> Interval {
    Interval::new(0.3, 0.7).unwrap()
}

fn omega0() -> Interval {
    Interval::new(0.4, 0.6).unwrap()
}

fn heat() -> DiffusionSpec {
    DiffusionSpec::constant(1.0, (-4.0, 4.0)).unwrap()
}

fn two_plus_sin() -> DiffusionSpec {
    DiffusionFamily::two_plus_sin().build(4.0).unwrap()
}

fn registry(j: u64) -> DiffusionFamily {
    match j % 3 {
        0 => DiffusionFamily::two_plus_sin(),
        1 => DiffusionFamily::Arctan { alpha: 0.5 },
        _ => DiffusionFamily::Polynomial {
            coeffs: vec![1.0, 0.2, 0.3],
            limit: 2.0,
        },
    }
}

fn square() -> ReactionSpec {
    ReactionSpec::new(Arc::new(|s| s * s), Arc::new(|_, _| 1.0), 1.0).unwrap()
}

fn mode_error(n_t: usize) -> (f64, Duration) {
    let grid = Grid::new(128, n_t, 0.1).unwrap();
    let y0 = grid.sample(|x| (PI * x).sin());
    let start = Instant::now();
    let traj = solve_free(&y0, &grid, &heat()).unwrap();
    let elapsed = start.elapsed();
    let decay = (-PI * PI * 0.1).exp();
    let diff: Vec<f64> = traj
        .terminal()
        .iter()
        .enumerate()
        .map(|(i, v)| v - decay * (PI * grid.x(i)).sin())
        .collect();
    (norms::l2(&diff, grid.dx()), elapsed)
}

#[test]
fn a1_solver_eigenmode() {
    let start = Instant::now();
    let (err, solve_time) = mode_error(512);
    let (err_half, _) = mode_error(1024);
    let ratio = err / err_half;
    let pass = err <= 1e-3 && (1.7..=2.3).contains(&ratio) && solve_time < Duration::from_secs(1);
    verdict(
        "A1",
        pass,
        start.elapsed(),
        format!(
            "L2 error {err:.3e} (<= 1e-3), dt-halving ratio {ratio:.3} (in [1.7, 2.3]), solve {:.3}s (< 1s)",
            solve_time.as_secs_f64()
        ),
    );
}

#[test]
fn a2_estimate_suite() {
    let start = Instant::now();
    let grid = Grid::new(64, 256, 0.5).unwrap();
    let c0 = GnConstant::default();
    let mut failures = Vec::new();
    let mut worst_monotone: f64 = 0.0;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_rate_margin = f64::INFINITY;
    for seed in 0..20u64 {
        let spec = registry(seed).build(4.0).unwrap();
        let mut rng = seeded(seed);
        let amp = rng.random_range(0.1..1.0);
        let y0 = InitialFamily::RandomTrig { n_modes: 4 }.sample(&grid, amp, seed).unwrap();
        let traj = solve_free(&y0, &grid, &spec).unwrap();
        let r = match h1_decay_report(&traj, &spec, c0) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("free#{seed}: {e}"));
                continue;
            }
        };
        worst_monotone = worst_monotone.max(r.monotone_violation);
        worst_bound = worst_bound.max(r.bound_violation - r.slack);
        let rho = spec.rho();
        if let Some(rate) = r.h1_rate_estimate {
            worst_rate_margin = worst_rate_margin.min((rate - (r.h1_rate_bound - 0.05 * rho)) / rho);
        }
        if !r.linf_checks_pass() || !r.h1_check_passes(rho) {
            failures.push(format!("free#{seed}"));
        }
    }
    let forced_grid = Grid::new(64, 256, 0.3).unwrap();
    let mut worst_modulus = f64::NEG_INFINITY;
    for seed in 100..120u64 {
        let spec = registry(seed).build(8.0).unwrap();
        let mut rng = seeded(seed);
        let amp = rng.random_range(0.1..1.0);
        let y0 = InitialFamily::RandomTrig { n_modes: 4 }.sample(&forced_grid, amp, seed).unwrap();
        let (fa, fk, fw) = (rng.random_range(-1.0..1.0), rng.random_range(1.0..4.0), rng.random_range(0.0..10.0));
        let f = SourceField::from_fn(forced_grid, |x, t| fa * (fk * PI * x).sin() * (fw * t).cos());
        let traj = solve_forward(&y0, &f, &forced_grid, &spec).unwrap();
        let excess = traj.max_abs()
            - max_modulus_bound(&y0, &f, &spec)
            - discretization_slack(&traj, norms::l2(&y0, forced_grid.dx()));
        worst_modulus = worst_modulus.max(excess);
        if excess > 0.0 {
            failures.push(format!("forced#{seed}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        "A2",
        pass,
        elapsed,
        format!(
            "40 scenarios: max M jump {worst_monotone:.2e} (<= 1e-10), max bound excess over slack {worst_bound:.3e}, \
             min H1 rate margin {worst_rate_margin:.3}·rho, max modulus excess {worst_modulus:.3e}; failures {failures:?}"
        ),
    );
}

#[test]
fn a3_additive_null_control() {
    let start = Instant::now();
    let spec = two_plus_sin();
    let grid = Grid::new(64, 256, 0.2).unwrap();
    let y0 = grid.sample(|x| 0.05 * (PI * x).sin());
    let psi = construct_psi(omega0(), &grid).unwrap();
    let pp = PenaltyParams::default();
    let (w, _) = resolve_weights(SChoice::Auto, &psi, 8.0, &grid, spec.a(0.0), &y0, omega(), &pp).unwrap();
    let out = fixed_point_null_control(&y0, &grid, &spec, &w, omega(), &pp, &FixedPointParams::default()).unwrap();
    let ratio = out.report.terminal_norm / norms::l2(&y0, grid.dx());

    // Gradient and symmetry checks on the frozen problem of the converged state.
    let problem = LqProblem::new(FrozenCoefficient::from_state(&spec, &out.state), &w, omega()).unwrap();
    let symmetry = problem.symmetry_defect(0x5eed).unwrap();
    let grad_err = gradient_check(&problem, &y0, &out.control, 1e-2, 20);

    let elapsed = start.elapsed();
    let pass = ratio <= 1e-3
        && out.outer_iterations <= 10
        && grad_err <= 1e-6
        && symmetry <= 1e-8
        && elapsed < Duration::from_secs(120);
    verdict(
        "A3",
        pass,
        elapsed,
        format!(
            "terminal ratio {ratio:.3e} (<= 1e-3), outer {} (<= 10), gradient FD error {grad_err:.2e} (<= 1e-6), \
             symmetry {symmetry:.2e} (<= 1e-8), s = {:.3e}",
            out.outer_iterations,
            w.s()
        ),
    );
}

/// Largest relative gap between central differences of the objective and the adjoint
/// gradient along `n` random weight-scaled directions.
fn gradient_check(problem: &LqProblem, y0: &[f64], u: &ControlSchedule, eps: f64, n: usize) -> f64 {
    let grid = *problem.frozen().grid();
    let weight = problem.weights().control_weight();
    let mut rng = seeded(0xfd);
    let mut vals = u.values().clone();
    for k in 0..grid.n_levels() {
        for v in vals.level_mut(k) {
            *v *= 1.0 + 0.5 * rng.random_range(-1.0..1.0);
        }
    }
    let u = ControlSchedule::projected(vals, problem.omega(), 0.0);
    let g = problem.gradient(y0, &u, eps).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let mut raw = SpaceTimeField::zeros(grid);
        for k in 0..grid.n_levels() {
            let wk = weight.level(k).to_vec();
            for (v, wt) in raw.level_mut(k).iter_mut().zip(wk) {
                *v = wt * rng.random_range(-1.0..1.0);
            }
        }
        let dir = ControlSchedule::projected(raw, problem.omega(), 0.0);
        let h = 1e-3 * u.linf() / dir.linf();
        let eval = |sign: f64| {
            let mut v = u.values().clone();
            for k in 0..grid.n_levels() {
                let d = dir.values().level(k).to_vec();
                for (a, b) in v.level_mut(k).iter_mut().zip(d) {
                    *a += sign * h * b;
                }
            }
            problem
                .objective(y0, &ControlSchedule::projected(v, problem.omega(), 0.0), eps)
                .unwrap()
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        let an = g
            .as_slice()
            .iter()
            .zip(dir.values().as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * grid.dx()
            * grid.dt();
        worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
    }
    worst
}

struct A4Outcome {
    name: &'static str,
    runs: Result<Vec<MultPipelineResult>, String>,
    elapsed: Duration,
}

fn a4_runs() -> Vec<A4Outcome> {
    let params = PipelineParams::default();
    let g = Grid::new(params.n_x, 8, 1.0).unwrap();
    let y0 = g.sample(|x| 0.5 * (PI * x).sin());
    let setup = CarlemanSetup::minimal(construct_psi(omega0(), &g).unwrap(), SChoice::Auto);
    [("a=1", heat()), ("a=2+sin", two_plus_sin())]
        .into_iter()
        .map(|(name, spec)| {
            let start = Instant::now();
            let runs = wait_refinement(
                &y0,
                &spec,
                &square(),
                omega(),
                &setup,
                &PenaltyParams::default(),
                &FixedPointParams::default(),
                &params,
                2,
            )
            .map_err(|e| e.to_string());
            A4Outcome {
                name,
                runs,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn schedule_shape_ok(r: &MultPipelineResult) -> bool {
    let start = ((r.t1 + r.t2) / r.grid.dt()).round() as usize;
    let quiet = (0..=start).all(|k| r.control.values().level(k).iter().all(|&v| v == 0.0));
    let supported = (0..r.grid.n_levels()).all(|k| {
        (0..r.grid.n_nodes()).all(|i| omega().contains(r.grid.x(i)) || r.control.values().get(k, i) == 0.0)
    });
    quiet && supported
}

#[test]
fn a4_a5_multiplicative_pipeline() {
    let start = Instant::now();
    let outcomes = a4_runs();
    let mut a4_pass = true;
    let mut a5_pass = true;
    let mut a4_detail = Vec::new();
    let mut a5_detail = Vec::new();
    for o in &outcomes {
        match &o.runs {
            Ok(runs) => {
                let r = &runs[0];
                let budget = 5.0 * (r.grid.dx().powi(2) + r.grid.dt());
                let ok = r.terminal_norm <= 1e-3 * r.y0_norm
                    && r.min_denominator >= 0.5
                    && schedule_shape_ok(r)
                    && r.identification_error <= budget;
                a4_pass &= ok;
                a4_detail.push(format!(
                    "{}: t1 {:.4} t2 {:.4} t3 {:.4}, ratio {:.2e}, min|g-θ| {:.3}, ident {:.1e} (<= {budget:.1e}), shape {}",
                    o.name,
                    r.t1,
                    r.t2,
                    r.t3,
                    r.terminal_norm / r.y0_norm,
                    r.min_denominator,
                    r.identification_error,
                    schedule_shape_ok(r)
                ));
                let linf: Vec<f64> = runs.iter().map(|r| r.linf_u).collect();
                let decreasing = runs.len() == 3 && linf.windows(2).all(|w| w[1] < w[0]);
                a5_pass &= decreasing;
                a5_detail.push(format!("{}: |u|∞ {:?}", o.name, linf.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()));
            }
            Err(e) => {
                a4_pass = false;
                a5_pass = false;
                a4_detail.push(format!("{}: {e}", o.name));
            }
        }
    }
    let elapsed = start.elapsed();
    let under = outcomes.iter().all(|o| o.elapsed < Duration::from_secs(300));
    let a4_ok = a4_pass && under;
    let line4 = emit("A4", a4_ok, elapsed, a4_detail.join("; "));
    let line5 = emit("A5", a5_pass, elapsed, a5_detail.join("; "));
    assert!(a4_ok && a5_pass, "{line4}\n{line5}");
}

#[test]
fn a6_time_optimal_sweep() {
    let start = Instant::now();
    let params = PipelineParams {
        n_ctrl: 256,
        ..PipelineParams::default()
    };
    let g = Grid::new(params.n_x, 8, 1.0).unwrap();
    let y0 = g.sample(|x| 0.5 * (PI * x).sin());
    let y0_norm = norms::l2(&y0, g.dx());
    let setup = CarlemanSetup::minimal(construct_psi(omega0(), &g).unwrap(), SChoice::Auto);
    let bisect_tol = 0.02;
    let sigmas = [0.25, 0.5, 1.0, 2.0];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in [("a=1", heat()), ("a=2+sin", two_plus_sin())] {
        let mut t_stars = Vec::new();
        for &sigma in &sigmas {
            let top = TimeOptimalParams {
                sigma,
                t_hi: 1.0,
                bisect_tol,
                terminal_tol: 1e-3 * y0_norm,
            };
            match time_optimal_search(
                &y0,
                &spec,
                &square(),
                omega(),
                &setup,
                &PenaltyParams::default(),
                &FixedPointParams::default(),
                &params,
                &top,
            ) {
                Ok(o) => {
                    let certified = o.feasible_run.as_ref().is_some_and(|r| {
                        admissible_check(&r.control, r.state.terminal(), &top).admissible
                    }) && o.below_record.as_ref().is_some_and(|b| !b.feasible);
                    pass &= certified;
                    t_stars.push(o.t_star);
                    if !certified {
                        detail.push(format!("{name} σ={sigma}: certificate missing (anomaly {})", o.anomaly));
                    }
                }
                Err(e) => {
                    pass = false;
                    detail.push(format!("{name} σ={sigma}: {e}"));
                }
            }
        }
        let monotone = t_stars.windows(2).all(|w| w[1] <= w[0] + bisect_tol);
        pass &= monotone && t_stars.len() == sigmas.len();
        detail.push(format!(
            "{name}: T*(σ={sigmas:?}) = {:?}",
            t_stars.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>()
        ));
    }
    let elapsed = start.elapsed();
    verdict("A6", pass && elapsed < Duration::from_secs(900), elapsed, detail.join("; "));
}

#[test]
fn a7_observability_probe() {
    let start = Instant::now();
    let horizon = 0.2;
    let s = 0.02 * horizon * horizon;
    let probe = |n_x: usize, omega: Interval| {
        let grid = Grid::new(n_x, 64, horizon).unwrap();
        let psi = construct_psi(omega0(), &grid).unwrap();
        let w = build_weights(&psi, 8.0, s, &grid).unwrap();
        observability_probe(&SourceField::constant(grid, 1.0), &w, omega, 100, 7).unwrap()
    };
    let coarse = probe(31, omega());
    let fine = probe(63, omega());
    let change = (fine.max_ratio / coarse.max_ratio).max(coarse.max_ratio / fine.max_ratio);
    let wide = probe(31, Interval::new(0.2, 0.8).unwrap());
    let shrinks = coarse.ratios.iter().zip(&wide.ratios).all(|(a, b)| b <= a);
    let pass = change < 2.0 && shrinks && coarse.all_finite && fine.all_finite;
    verdict(
        "A7",
        pass,
        start.elapsed(),
        format!(
            "max ratio {:.4e} -> {:.4e} under dx/2 (factor {change:.3} < 2), ω enlargement non-increasing on all 100 samples: {shrinks}",
            coarse.max_ratio, fine.max_ratio
        ),
    );
}

#[test]
fn a8_cost_homogeneity() {
    let start = Instant::now();
    let grid = Grid::new(64, 256, 0.2).unwrap();
    let psi = construct_psi(omega0(), &grid).unwrap();
    let pp = PenaltyParams::default();
    let fp = FixedPointParams::default();
    let base = grid.sample(|x| 0.05 * (PI * x).sin());
    let scaled = |c: f64| base.iter().map(|v| c * v).collect::<Vec<f64>>();

    let (w_lin, _) = resolve_weights(SChoice::Auto, &psi, 8.0, &grid, 1.0, &base, omega(), &pp).unwrap();
    let lin: Vec<CostReport> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&c| fixed_point_null_control(&scaled(c), &grid, &heat(), &w_lin, omega(), &pp, &fp).unwrap().report)
        .collect();
    let c2_spread = lin
        .iter()
        .map(|r| (r.c2_ratio - lin[1].c2_ratio).abs() / lin[1].c2_ratio)
        .fold(0.0, f64::max);

    let spec = two_plus_sin();
    let (w_q, _) = resolve_weights(SChoice::Auto, &psi, 8.0, &grid, spec.a(0.0), &base, omega(), &pp).unwrap();
    let quasi: Vec<CostReport> = [0.5, 1.0]
        .iter()
        .map(|&c| fixed_point_null_control(&scaled(c), &grid, &spec, &w_q, omega(), &pp, &fp).unwrap().report)
        .collect();
    let spread = |f: fn(&CostReport) -> f64| {
        let (a, b) = (f(&quasi[0]), f(&quasi[1]));
        a.max(b) / a.min(b)
    };
    let (q1, q2) = (spread(|r| r.c1_ratio), spread(|r| r.c2_ratio));
    let pass = c2_spread <= 1e-9 && q1 <= 2.0 && q2 <= 2.0;
    verdict(
        "A8",
        pass,
        start.elapsed(),
        format!("linear c2 relative spread {c2_spread:.2e} (<= 1e-9); quasilinear c1 factor {q1:.4}, c2 factor {q2:.4} (<= 2)"),
    );
}

#[test]
fn a9_cross_solver() {
    let start = Instant::now();
    let grid = Grid::new(64, 256, 0.2).unwrap();
    let budget = 5.0 * (grid.dx().powi(2) + grid.dt());
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let spec = registry(seed).build(4.0).unwrap();
        let mut rng = seeded(1000 + seed);
        let amp = rng.random_range(0.1..1.0);
        let y0 = InitialFamily::RandomTrig { n_modes: 4 }.sample(&grid, amp, seed).unwrap();
        let fa = rng.random_range(-1.0..1.0);
        let f = SourceField::from_fn(grid, |x, t| fa * (PI * x).sin() * (1.0 + t));
        let direct = solve_forward(&y0, &f, &grid, &spec).unwrap();
        let kirchhoff = solve_forward_kirchhoff(&y0, &f, &grid, &spec).unwrap();
        worst = worst.max(norms::l2_space_time_distance(&direct, &kirchhoff));
    }
    verdict(
        "A9",
        worst <= budget,
        start.elapsed(),
        format!("max L2(Q_T) gap {worst:.3e} over 10 scenarios (<= {budget:.3e})"),
    );
}
