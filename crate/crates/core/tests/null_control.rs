use std::f64::consts::PI;

use qparctl_core::carleman::{build_weights, construct_psi, CarlemanWeights};
use qparctl_core::families::DiffusionFamily;
use qparctl_core::null_control::*;
use qparctl_core::pde::*;
use qparctl_core::rng::seeded;
use qparctl_core::Error;
use rand::Rng;

fn omega() -> Interval {
    Interval::new(0.3, 0.7).unwrap()
}

fn weights(grid: &Grid, scale: f64) -> CarlemanWeights {
    let psi = construct_psi(Interval::new(0.4, 0.6).unwrap(), grid).unwrap();
    build_weights(&psi, 8.0, scale * grid.horizon().powi(2), grid).unwrap()
}

fn sine(grid: &Grid, amp: f64) -> Vec<f64> {
    grid.sample(|x| amp * (PI * x).sin())
}

fn heat_problem(grid: Grid) -> LqProblem {
    let w = weights(&grid, 0.02);
    LqProblem::new(FrozenCoefficient::constant(grid, 1.0).unwrap(), &w, omega()).unwrap()
}

fn random_profile(grid: &Grid, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut v: Vec<f64> = (0..grid.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    v
}

#[test]
fn zero_initial_state_gives_zero_control() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let p = heat_problem(grid);
    let y0 = vec![0.0; grid.n_nodes()];
    let sol = p.solve(&y0, 1e-4, None, &PenaltyParams::default()).unwrap();
    assert!(sol.control.is_zero());
    assert_eq!(sol.state.max_abs(), 0.0);
    assert_eq!(sol.terminal_norm(), 0.0);
}

#[test]
fn huge_penalty_switches_control_off() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let p = heat_problem(grid);
    let y0 = sine(&grid, 0.1);
    let pp = PenaltyParams::default();
    let tight = p.solve(&y0, 1e-2, None, &pp).unwrap().control.linf();
    let loose = p.solve(&y0, 1e6, None, &pp).unwrap().control.linf();
    let looser = p.solve(&y0, 1e8, None, &pp).unwrap().control.linf();
    assert!(loose <= 1e-2 * tight);
    // Far beyond ||Λ|| the control scales like 1/ε.
    assert!((looser * 100.0 / loose - 1.0).abs() < 0.02);
}

#[test]
fn gradient_matches_central_differences() {
    let grid = Grid::new(23, 40, 0.2).unwrap();
    let p = heat_problem(grid);
    let y0 = sine(&grid, 0.1);
    let eps = 1e-2;
    let base = p.solve(&y0, eps, None, &PenaltyParams::default()).unwrap();
    // Perturb away from the optimum so the gradient is not zero.
    let mut rng = seeded(11);
    let mut vals = base.control.values().clone();
    for k in 0..grid.n_levels() {
        for v in vals.level_mut(k) {
            *v *= 1.0 + 0.5 * rng.random_range(-1.0..1.0);
        }
    }
    let u = ControlSchedule::projected(vals, omega(), 0.0);
    let g = p.gradient(&y0, &u, eps).unwrap();
    let scale = u.linf();
    let weight = p.weights().control_weight();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        // Directions scaled by the control weight keep the quadratic term O(1).
        let mut raw = SpaceTimeField::zeros(grid);
        for k in 0..grid.n_levels() {
            let wk = weight.level(k).to_vec();
            for (v, wt) in raw.level_mut(k).iter_mut().zip(wk) {
                *v = wt * rng.random_range(-1.0..1.0);
            }
        }
        let dir = ControlSchedule::projected(raw, omega(), 0.0);
        let h = 1e-3 * scale / dir.linf();
        let shift = |sign: f64| {
            let mut v = u.values().clone();
            for k in 0..grid.n_levels() {
                let d = dir.values().level(k).to_vec();
                for (a, b) in v.level_mut(k).iter_mut().zip(d) {
                    *a += sign * h * b;
                }
            }
            p.objective(&y0, &ControlSchedule::projected(v, omega(), 0.0), eps).unwrap()
        };
        let fd = (shift(1.0) - shift(-1.0)) / (2.0 * h);
        let an: f64 = g
            .as_slice()
            .iter()
            .zip(dir.values().as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * grid.dx()
            * grid.dt();
        worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
    }
    assert!(worst <= 1e-6, "relative gradient error {worst:.3e}");
}

#[test]
fn gram_operator_is_symmetric_and_semidefinite() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let b = SpaceTimeField::from_fn(grid, |x, t| 1.5 + 0.3 * (PI * x).sin() * (1.0 + t));
    let p = LqProblem::from_nodal(&b, &weights(&grid, 0.02), omega()).unwrap();
    for seed in 0..5 {
        assert!(p.symmetry_defect(seed).unwrap() <= SYMMETRY_TOL);
        let q = random_profile(&grid, 100 + seed);
        let lq = p.apply(&q).unwrap();
        assert!(norms::inner(&lq, &q, grid.dx()) >= -1e-10);
    }
}

#[test]
fn heat_null_control_reaches_small_terminal_state() {
    let grid = Grid::new(64, 256, 0.2).unwrap();
    let y0 = sine(&grid, 0.1);
    let psi = construct_psi(Interval::new(0.4, 0.6).unwrap(), &grid).unwrap();
    let pp = PenaltyParams::default();
    let (w, _) = resolve_weights(SChoice::Auto, &psi, 8.0, &grid, 1.0, &y0, omega(), &pp).unwrap();
    let p = LqProblem::new(FrozenCoefficient::constant(grid, 1.0).unwrap(), &w, omega()).unwrap();
    let (sol, trace) = p.continuation(&y0, &pp, None).unwrap();
    assert_eq!(sol.eps, 1e-8);
    let ratio = sol.terminal_norm() / norms::l2(&y0, grid.dx());
    assert!(ratio <= 1e-4, "ratio {ratio:.3e}");
    for pair in trace.windows(2) {
        assert!(pair[1].terminal_norm <= pair[0].terminal_norm + 1e-10);
    }
}

#[test]
fn optimality_system_holds_pointwise() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let w = weights(&grid, 0.02);
    let b = SpaceTimeField::constant(grid, 2.0);
    let y0 = sine(&grid, 0.1);
    let (sol, _) = LqProblem::from_nodal(&b, &w, omega())
        .unwrap()
        .continuation(&y0, &PenaltyParams::default(), None)
        .unwrap();
    let weight = w.control_weight();
    let scale = sol.control.linf();
    for k in 0..grid.n_levels() {
        for i in 0..grid.n_nodes() {
            let u = sol.control.values().get(k, i);
            let x = grid.x(i);
            if !omega().contains(x) || k == 0 || k == grid.n_t() {
                assert_eq!(u, 0.0);
                continue;
            }
            let expected = weight.get(k, i) * sol.adjoint.get(k, i);
            assert!((u - expected).abs() <= 1e-10 * scale.max(1.0));
        }
    }
}

#[test]
fn lq_wrapper_agrees_with_problem_solve() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let w = weights(&grid, 0.02);
    let b = SpaceTimeField::constant(grid, 1.0);
    let y0 = sine(&grid, 0.1);
    let pp = PenaltyParams::default();
    let a = solve_lq_penalized(&b, &y0, &w, 1e-3, omega(), &pp).unwrap();
    let b2 = LqProblem::from_nodal(&b, &w, omega()).unwrap().solve(&y0, 1e-3, None, &pp).unwrap();
    assert_eq!(a.control, b2.control);
}

#[test]
fn constant_coefficient_needs_one_outer_iteration() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
    let w = weights(&grid, 0.02);
    let y0 = sine(&grid, 0.05);
    let pp = PenaltyParams::default();
    let fp = FixedPointParams::default();
    let first = fixed_point_null_control(&y0, &grid, &spec, &w, omega(), &pp, &fp).unwrap();
    assert_eq!(first.outer_iterations, 1);
    let again = fixed_point_null_control(&y0, &grid, &spec, &w, omega(), &pp, &fp).unwrap();
    assert_eq!(first.control, again.control);
    assert_eq!(first.state, again.state);
}

#[test]
fn zero_initial_state_is_a_fixed_point() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let spec = DiffusionFamily::two_plus_sin().build(2.0).unwrap();
    let y0 = vec![0.0; grid.n_nodes()];
    let fp = FixedPointParams::default();
    let out = fixed_point_null_control(&y0, &grid, &spec, &weights(&grid, 0.02), omega(), &PenaltyParams::default(), &fp)
        .unwrap();
    assert!(out.control.is_zero());
    assert_eq!(out.state.max_abs(), 0.0);
    let staged = staged_control(&y0, 0.05, &grid, &spec, &weights(&grid, 0.02), omega(), &PenaltyParams::default(), &fp)
        .unwrap();
    assert!(staged.control.is_zero());
}

#[test]
fn staged_without_delay_matches_direct() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let spec = DiffusionFamily::two_plus_sin().build(2.0).unwrap();
    let w = weights(&grid, 0.02);
    let y0 = sine(&grid, 0.05);
    let pp = PenaltyParams::default();
    let fp = FixedPointParams::default();
    let direct = fixed_point_null_control(&y0, &grid, &spec, &w, omega(), &pp, &fp).unwrap();
    let staged = staged_control(&y0, 0.0, &grid, &spec, &w, omega(), &pp, &fp).unwrap();
    assert_eq!(direct.control, staged.control);
    assert_eq!(direct.state, staged.state);
}

#[test]
fn waiting_rescues_a_large_initial_state() {
    let grid = Grid::new(31, 128, 0.35).unwrap();
    let spec = DiffusionFamily::two_plus_sin().build(2.0).unwrap();
    let w = weights(&grid, 0.02);
    let y0 = sine(&grid, 1.0);
    let h1 = norms::h1(&y0, grid.dx());
    let y0: Vec<f64> = y0.iter().map(|v| v * 0.5 / h1).collect();
    let pp = PenaltyParams::default();
    let fp = FixedPointParams::default();
    let err = staged_control(&y0, 0.0, &grid, &spec, &w, omega(), &pp, &fp).unwrap_err();
    assert!(matches!(err, Error::SmallnessGateExceeded { .. }));

    let free = solve_free(&y0, &grid, &spec).unwrap();
    let k0 = (0..grid.n_levels()).find(|&k| norms::h1(free.level(k), grid.dx()) <= 0.05).unwrap();
    let staged = staged_control(&y0, grid.t(k0), &grid, &spec, &w, omega(), &pp, &fp).unwrap();
    assert_eq!(staged.start_level, k0);
    assert!(staged.report.terminal_norm <= 1e-3 * norms::l2(&y0, grid.dx()));
    for k in 0..=k0 {
        assert!(staged.control.values().level(k).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn linear_cost_is_homogeneous() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let spec = DiffusionSpec::constant(1.0, (-2.0, 2.0)).unwrap();
    let w = weights(&grid, 0.02);
    let pp = PenaltyParams::default();
    let fp = FixedPointParams::default();
    let ratios: Vec<CostReport> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&c| {
            fixed_point_null_control(&sine(&grid, 0.05 * c), &grid, &spec, &w, omega(), &pp, &fp)
                .unwrap()
                .report
        })
        .collect();
    for r in &ratios[1..] {
        assert!((r.c2_ratio - ratios[0].c2_ratio).abs() <= 1e-9 * ratios[0].c2_ratio);
        assert!((r.c1_ratio - ratios[0].c1_ratio).abs() <= 1e-9 * ratios[0].c1_ratio);
    }
}

#[test]
fn returned_controls_respect_support() {
    let grid = Grid::new(31, 64, 0.2).unwrap();
    let spec = DiffusionFamily::two_plus_sin().build(2.0).unwrap();
    let y0 = sine(&grid, 0.05);
    let out = fixed_point_null_control(
        &y0,
        &grid,
        &spec,
        &weights(&grid, 0.02),
        omega(),
        &PenaltyParams::default(),
        &FixedPointParams::default(),
    )
    .unwrap();
    let u = out.control.values();
    assert!(u.level(0).iter().chain(u.level(grid.n_t())).all(|&v| v == 0.0));
    for k in 0..grid.n_levels() {
        for i in 0..grid.n_nodes() {
            if !omega().contains(grid.x(i)) {
                assert_eq!(u.get(k, i), 0.0);
            }
        }
    }
    assert!(out.report.k_membership.yx_linf.is_finite());
}
