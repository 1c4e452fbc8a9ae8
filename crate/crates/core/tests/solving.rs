use ceqopt::lagrange::{benchmark_methods, cross_validate, find_stationary_lagrange, lagrangian_system, GradientTape};
use ceqopt::problem::Problem;
use ceqopt::solver::{dedupe, multistart_solve, Root};
use ceqopt::stationary::{boundary_system, find_boundaries, find_stationary, stationary_system, Analyzer, AxisStatus, BoundarySystem};
use ceqopt::taylor::CurveCalculus;
use proptest::prelude::*;

mod common;

fn examples() -> [Problem; 3] {
    [common::example_1a(), common::example_1b(), common::example_2()]
}

fn arb_roots() -> impl Strategy<Value = Vec<Root>> {
    let root = (prop::collection::vec(-1.0f64..1.0, 2), 0.0f64..1e-10, 0usize..50).prop_map(|(point, r, s)| Root {
        // Coarse lattice so that near-duplicates are common.
        point: point.iter().map(|v| (v * 4.0).round() / 4.0 + v * 1e-7).collect(),
        residual_norm: r,
        iterations: 3,
        start_index: s,
    });
    prop::collection::vec(root, 0..40)
}

proptest! {
    #[test]
    fn dedupe_is_idempotent(roots in arb_roots(), tol in prop::sample::select(vec![1e-6, 1e-3, 0.3])) {
        let once = dedupe(roots, tol);
        let twice = dedupe(once.clone(), tol);
        prop_assert_eq!(&once, &twice);
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                prop_assert!(common::max_dist(&a.point, &b.point) > tol);
            }
        }
    }
}

#[test]
fn roots_satisfy_their_system() {
    for p in examples() {
        let cfg = common::config(&p);
        let system = stationary_system(&p).unwrap();
        for r in multistart_solve(&system, &cfg).unwrap() {
            let worst = system
                .iter()
                .map(|e| e.evaluate(&r.point).unwrap().abs())
                .fold(0.0, f64::max);
            assert!(worst <= cfg.residual_tol, "{:?}: {worst}", r.point);
        }
    }
}

#[test]
fn output_independent_of_thread_count() {
    let p = common::example_2();
    let cfg = common::config(&p);
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let a = serial.install(|| find_stationary(&p, &cfg).unwrap());
    let b = wide.install(|| find_stationary(&p, &cfg).unwrap());
    assert_eq!(a, b);
    let a = serial.install(|| find_boundaries(&p, &[0, 1, 2], &cfg).unwrap());
    let b = wide.install(|| find_boundaries(&p, &[0, 1, 2], &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn first_derivative_vanishes_on_valid_axes() {
    for p in examples() {
        let calc = CurveCalculus::new(&p).unwrap();
        for sp in find_stationary(&p, &common::config(&p)).unwrap() {
            for ax in sp.axes.iter().filter(|a| a.det_s.abs() > 1e-8) {
                let d1 = calc.derivative_value(ax.axis, 1, &sp.point).unwrap();
                assert!(d1.abs() <= 1e-7 * (1.0 + sp.f_value.abs()), "{:?} along {}: {d1}", sp.point, ax.axis);
            }
        }
    }
}

#[test]
fn boundary_points_solve_their_systems() {
    for p in examples() {
        let cfg = common::config(&p);
        let axes: Vec<usize> = (0..p.nvars()).collect();
        for b in find_boundaries(&p, &axes, &cfg).unwrap() {
            match boundary_system(&p, b.axis).unwrap() {
                BoundarySystem::Equations(eqs) => {
                    for bp in &b.points {
                        for e in &eqs {
                            assert!(e.evaluate(&bp.point).unwrap().abs() <= cfg.residual_tol);
                        }
                    }
                }
                _ => assert!(b.points.is_empty()),
            }
        }
    }
}

#[test]
fn unbounded_axis_has_no_fold_on_the_traced_curve() {
    let p = common::example_1a();
    let b = find_boundaries(&p, &[1], &common::config(&p)).unwrap();
    assert_eq!(b[0].status, AxisStatus::Unbounded);
    let calc = CurveCalculus::new(&p).unwrap();
    let sample = calc.tracer().trace(1, &[1.0, 0.0], 0.01, 150).unwrap();
    assert!(!sample.truncated.0 && !sample.truncated.1);
    for x in &sample.points {
        assert!(calc.det_s(1, x).unwrap().abs() > 1e-3);
    }
}

#[test]
fn lagrangian_of_the_parabola() {
    let p = common::example_1a();
    let sys = lagrangian_system(&p);
    assert_eq!(sys.len(), 3);
    // 2x - l, 4y + 2 l y, x - y^2 - 1 at (x, y, l) = (0.5, 2, 3)
    let vals: Vec<f64> = sys.iter().map(|e| e.evaluate(&[0.5, 2.0, 3.0]).unwrap()).collect();
    assert_eq!(vals, vec![-2.0, 20.0, -4.5]);
    let pts = find_stationary_lagrange(&p, &common::config(&p)).unwrap();
    assert_eq!(pts.len(), 1);
    assert!(common::max_dist(&pts[0].point, &[1.0, 0.0]) <= 1e-8);
    assert!((pts[0].multipliers[0] - 2.0).abs() <= 1e-8);
}

#[test]
fn conflicting_multipliers_have_no_solution() {
    let p = Problem::parse(&["x", "y"], "x + y", &[("x - y", 0.0)])
        .unwrap()
        .with_uniform_box(-3.0, 3.0)
        .unwrap();
    assert!(find_stationary_lagrange(&p, &common::config(&p)).unwrap().is_empty());
    assert!(find_stationary(&p, &common::config(&p)).unwrap().is_empty());
}

#[test]
fn matched_pairs_recover_multipliers() {
    for p in examples() {
        let cfg = common::config(&p);
        let det = find_stationary(&p, &cfg).unwrap();
        let lag = find_stationary_lagrange(&p, &cfg).unwrap();
        let report = cross_validate(&p, &det, &lag, 1e-7);
        assert!(report.is_full_match());
        let grads = GradientTape::new(&p);
        for m in &report.matched {
            assert!(m.multiplier_residual.unwrap() <= 1e-7);
            let (_, ls_residual, _, _) = grads.least_squares(&det[m.determinant_index].point).unwrap();
            assert!(ls_residual <= 1e-7);
        }
    }
}

#[test]
fn empty_sets_match_trivially() {
    let p = common::example_1a();
    assert!(cross_validate(&p, &[], &[], 1e-7).is_full_match());
}

#[test]
fn benchmark_finds_the_same_roots() {
    let p = common::example_2();
    let report = benchmark_methods(&p, &common::config(&p), 2).unwrap();
    assert_eq!(report.determinant.roots, 4);
    assert_eq!(report.lagrange.roots, 4);
    assert_eq!(report.determinant.unknowns, 3);
    assert_eq!(report.lagrange.unknowns, 5);
}

#[test]
fn dependent_constraints_are_diagnosed() {
    let p = Problem::parse(&["x", "y", "z"], "x*y*z", &[("x + y + z", 1.0), ("2*x + 2*y + 2*z", 2.0)])
        .unwrap()
        .with_uniform_box(-2.0, 2.0)
        .unwrap();
    let cfg = common::config(&p);
    let analyzer = Analyzer::new(&p).unwrap();
    let outcome = analyzer.find_stationary(&cfg).unwrap();
    assert!(outcome.diagnostics.iter().any(|d| d.code == "dependent_constraints"));
    let bench = benchmark_methods(&p, &cfg, 1).unwrap();
    assert!(bench.determinant.diagnostics.iter().any(|d| d.code == "dependent_constraints"));
    assert!(bench.lagrange.diagnostics.iter().any(|d| d.code == "dependent_constraints"));
}
