//! End-to-end acceptance checks on the worked examples and the random
//! problem suite. Prints one PASS/FAIL line per criterion and fails the
//! target if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ceqopt::lagrange::{cross_validate, find_stationary_lagrange, GradientTape};
use ceqopt::matrix::{constraint_jacobian, constraint_matrix};
use ceqopt::problem::Problem;
use ceqopt::run::{run, Command, RunOptions};
use ceqopt::stationary::{find_boundaries, find_stationary, stationary_system, AxisStatus, StationaryPoint};
use ceqopt::taylor::CurveCalculus;
use ceqopt::trace::numeric_curve_derivatives;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Every expected point has exactly one found point within `tol` and the
/// sets have equal size.
fn same_set(found: &[Vec<f64>], expected: &[Vec<f64>], tol: f64) -> Check {
    ensure!(
        found.len() == expected.len(),
        "expected {} points, found {}: {found:?}",
        expected.len(),
        found.len()
    );
    for e in expected {
        let hits = found.iter().filter(|f| common::max_dist(f, e) <= tol).count();
        ensure!(hits == 1, "{e:?} matched {hits} found points in {found:?}");
    }
    Ok(())
}

fn points(sps: &[StationaryPoint]) -> Vec<Vec<f64>> {
    sps.iter().map(|s| s.point.clone()).collect()
}

fn series(p: &Problem, k: usize, center: &[f64], order: usize) -> Result<Vec<f64>, String> {
    let calc = CurveCalculus::new(p).map_err(|e| e.to_string())?;
    Ok(calc.taylor(k, center, order).map_err(|e| e.to_string())?.coefficients)
}

fn coefficients_close(got: &[f64], want: &[f64], tol: f64) -> Check {
    for (m, (g, w)) in got.iter().zip(want).enumerate() {
        ensure!(close(*g, *w, tol), "c_{m} = {g}, expected {w} (series {got:?})");
    }
    Ok(())
}

fn criterion_1() -> Check {
    let p = common::example_1a();
    let cfg = common::config(&p);
    let sps = find_stationary(&p, &cfg).map_err(|e| e.to_string())?;
    same_set(&points(&sps), &[vec![1.0, 0.0]], 1e-8)?;
    ensure!(close(sps[0].f_value, 1.0, 1e-8), "f = {}", sps[0].f_value);

    let det = stationary_system(&p).map_err(|e| e.to_string())?.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (x, y) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let got = det.evaluate(&[x, y]).map_err(|e| e.to_string())?;
        let want = -4.0 * x * y - 4.0 * y;
        ensure!(rel(got, want, 1e-9), "Det J at ({x}, {y}) = {got}, expected {want}");
    }

    let b = find_boundaries(&p, &[0, 1], &cfg).map_err(|e| e.to_string())?;
    ensure!(b[0].status == AxisStatus::Solved, "x axis status {:?}", b[0].status);
    let bx: Vec<Vec<f64>> = b[0].points.iter().map(|bp| bp.point.clone()).collect();
    same_set(&bx, &[vec![1.0, 0.0]], 1e-8)?;
    ensure!(b[1].status == AxisStatus::Unbounded, "y axis status {:?}", b[1].status);
    ensure!(b[1].points.is_empty(), "boundary points along y: {:?}", b[1].points);
    Ok(())
}

fn criterion_2() -> Check {
    let p = common::example_1a();
    let along_x = series(&p, 0, &[1.0, 0.0], 3)?;
    coefficients_close(&along_x[..3], &[1.0, 4.0, 1.0], 1e-10)?;
    ensure!(along_x[3].abs() <= 1e-9, "c_3 along x = {}", along_x[3]);
    let along_y = series(&p, 1, &[1.0, 0.0], 3)?;
    coefficients_close(&along_y, &[1.0, 0.0, 4.0, 0.0], 1e-9)
}

fn criterion_3() -> Check {
    let p = common::example_1b();
    let sps = find_stationary(&p, &common::config(&p)).map_err(|e| e.to_string())?;
    let r = (1.0f64 / 3.0).sqrt();
    let b = vec![2.0 / 3.0, r];
    same_set(&points(&sps), &[vec![1.0, 0.0], b.clone(), vec![2.0 / 3.0, -r]], 1e-8)?;
    let calc = CurveCalculus::new(&p).map_err(|e| e.to_string())?;
    for sp in &sps {
        let want_f = if sp.point[0] > 0.9 { 1.0 } else { 2.0 / 3.0 };
        ensure!(close(sp.f_value, want_f, 1e-8), "f at {:?} = {}", sp.point, sp.f_value);
        // The series coefficient also covers A, where x does not
        // parametrize the curve and the raw quotient is 0/0.
        let s = calc.taylor(0, &sp.point, 2).map_err(|e| e.to_string())?;
        let f2 = 2.0 * s.coefficients[2];
        ensure!(close(f2, 6.0, 1e-9), "f''_x at {:?} = {f2}", sp.point);
    }
    coefficients_close(&series(&p, 1, &b, 2)?, &[2.0 / 3.0, 0.0, 4.0], 1e-9)
}

fn example_2_points() -> Vec<Vec<f64>> {
    let s3 = 3.0f64.sqrt();
    let z = 1.0 - 2.0 / s3;
    let x = (2.0 * s3 - 4.0 / 3.0).sqrt();
    let y = 4.0 / 3.0 - 4.0 / s3;
    vec![vec![0.0, 3.0, -2.0], vec![0.0, 0.0, 1.0], vec![-x, y, z], vec![x, y, z]]
}

fn criterion_4() -> Check {
    let p = common::example_2();
    let sps = find_stationary(&p, &common::config(&p)).map_err(|e| e.to_string())?;
    let expected = example_2_points();
    same_set(&points(&sps), &expected, 1e-8)?;
    let f_cd = 1.0 + 16.0 / (3.0 * 3.0f64.sqrt());
    for (e, want) in expected.iter().zip([-14.0, 1.0, f_cd, f_cd]) {
        let sp = sps.iter().find(|s| common::max_dist(&s.point, e) <= 1e-8).unwrap();
        ensure!(close(sp.f_value, want, 1e-8), "f at {:?} = {}, expected {want}", sp.point, sp.f_value);
    }
    Ok(())
}

fn criterion_5() -> Check {
    let p = common::example_2();
    let b = find_boundaries(&p, &[0, 1, 2], &common::config(&p)).map_err(|e| e.to_string())?;
    let s2 = 2.0f64.sqrt();
    let a = vec![0.0, 3.0, -2.0];
    let bb = vec![0.0, 0.0, 1.0];
    let expected = [
        vec![vec![1.5, -0.75, -0.5], vec![-1.5, -0.75, -0.5]],
        vec![a.clone(), bb.clone(), vec![s2, -1.0, 0.0], vec![-s2, -1.0, 0.0]],
        vec![a, bb],
    ];
    let mut union: Vec<Vec<f64>> = Vec::new();
    for (axis, want) in b.iter().zip(&expected) {
        let got: Vec<Vec<f64>> = axis.points.iter().map(|bp| bp.point.clone()).collect();
        same_set(&got, want, 1e-8).map_err(|e| format!("axis {}: {e}", axis.axis))?;
        for q in got {
            if !union.iter().any(|u| common::max_dist(u, &q) <= 1e-8) {
                union.push(q);
            }
        }
    }
    ensure!(union.len() == 6, "union has {} points", union.len());
    Ok(())
}

fn criterion_6() -> Check {
    let p = common::example_2();
    let calc = CurveCalculus::new(&p).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for x in common::curve_points(&p, 200, 6) {
        if checked == 20 {
            break;
        }
        let z = x[2];
        // Keep away from the folds of both parametrizations.
        let dy = calc.det_s(1, &x).map_err(|e| e.to_string())?;
        let dz = calc.det_s(2, &x).map_err(|e| e.to_string())?;
        if dy.abs() < 0.2 || dz.abs() < 0.2 || z.abs() < 0.2 {
            continue;
        }
        let fd_y = {
            let sample = calc.tracer().trace(1, &x, 1e-3, 40).map_err(|e| e.to_string())?;
            numeric_curve_derivatives(&sample, sample.center_index, 1).map_err(|e| e.to_string())?[0]
        };
        let fd_z = {
            let sample = calc.tracer().trace(2, &x, 1e-3, 40).map_err(|e| e.to_string())?;
            numeric_curve_derivatives(&sample, sample.center_index, 2).map_err(|e| e.to_string())?[1]
        };
        let f1_y = calc.derivative_value(1, 1, &x).map_err(|e| e.to_string())?;
        let f2_z = calc.derivative_value(2, 2, &x).map_err(|e| e.to_string())?;
        let formula_y = 1.5 * z - 0.5 / z - 3.0;
        let formula_z = 6.0 * (z - 1.0);
        ensure!(rel(f1_y, formula_y, 1e-9), "f'_y at {x:?}: symbolic {f1_y}, formula {formula_y}");
        ensure!(rel(f2_z, formula_z, 1e-9), "f''_z at {x:?}: symbolic {f2_z}, formula {formula_z}");
        ensure!(rel(fd_y, formula_y, 1e-5), "f'_y at {x:?}: traced {fd_y}, formula {formula_y}");
        ensure!(rel(fd_z, formula_z, 1e-5), "f''_z at {x:?}: traced {fd_z}, formula {formula_z}");
        checked += 1;
    }
    ensure!(checked == 20, "only {checked} usable curve points");
    coefficients_close(&series(&p, 0, &[0.0, 3.0, -2.0], 2)?, &[-14.0, 0.0, 23.0 / 3.0], 1e-8)
}

fn equivalence(label: &str, p: &Problem, det: &[StationaryPoint], lag: &[ceqopt::lagrange::LagrangePoint]) -> Check {
    let report = cross_validate(p, det, lag, 1e-7);
    ensure!(report.lagrange_only.is_empty(), "{label}: Lagrange-only points {:?}", report.lagrange_only);
    for d in &report.determinant_only {
        ensure!(
            d.rank_deficient,
            "{label}: determinant point {:?} unmatched with full-rank constraints",
            det[d.index].point
        );
    }
    let grads = GradientTape::new(p);
    for m in &report.matched {
        let x = &det[m.determinant_index].point;
        let (_, residual, _, _) = grads.least_squares(x).ok_or(format!("{label}: gradients undefined at {x:?}"))?;
        ensure!(residual <= 1e-7, "{label}: least-squares residual {residual} at {x:?}");
        let r = m.multiplier_residual.unwrap_or(f64::INFINITY);
        ensure!(r <= 1e-7, "{label}: multiplier residual {r} at {x:?}");
    }
    Ok(())
}

fn criterion_7() -> Check {
    for (label, p) in [
        ("example 1a", common::example_1a()),
        ("example 1b", common::example_1b()),
        ("example 2", common::example_2()),
    ] {
        let cfg = common::config(&p);
        let det = find_stationary(&p, &cfg).map_err(|e| e.to_string())?;
        let lag = find_stationary_lagrange(&p, &cfg).map_err(|e| e.to_string())?;
        equivalence(label, &p, &det, &lag)?;
    }
    let mut rank_deficient = 0;
    for i in 0..25 {
        let case = common::random_suite_case(i);
        let label = format!("suite #{i} (seed {}, N = {})", case.seed, case.problem.nvars());
        equivalence(&label, &case.problem, &case.determinant, &case.lagrange)?;
        rank_deficient += cross_validate(&case.problem, &case.determinant, &case.lagrange, 1e-7)
            .determinant_only
            .len();
    }
    println!("    ({rank_deficient} rank-deficient determinant-only points in the random suite)");
    Ok(())
}

fn criterion_8() -> Check {
    for (label, p) in [
        ("example 1a", common::example_1a()),
        ("example 1b", common::example_1b()),
        ("example 2", common::example_2()),
    ] {
        let n = p.nvars();
        let calc = CurveCalculus::new(&p).map_err(|e| e.to_string())?;
        let jg = constraint_jacobian(&p.constraint_functions()).map_err(|e| e.to_string())?;
        let mut used = 0;
        for x in common::curve_points(&p, 400, 8) {
            if used == 100 {
                break;
            }
            // s[k][i] = s_{i,k}
            let mut s = Vec::with_capacity(n);
            for k in 0..n {
                let den = calc.det_s(k, &x).map_err(|e| e.to_string())?;
                if den.abs() <= 1e-3 {
                    break;
                }
                s.push(calc.coeffs(k).evaluate(&x).map_err(|e| e.to_string())?.unwrap());
            }
            if s.len() < n {
                continue;
            }
            used += 1;
            for i in 0..n {
                for k in 0..n {
                    let prod = s[k][i] * s[i][k];
                    ensure!(rel(prod, 1.0, 1e-9), "{label}: s_{i}{k} s_{k}{i} = {prod} at {x:?}");
                    for j in 0..n {
                        let (direct, chained) = (s[j][i], s[k][i] * s[j][k]);
                        ensure!(
                            rel(direct, chained, 1e-9) || close(direct, chained, 1e-15),
                            "{label}: chain rule ({i},{j}) via {k}: {direct} vs {chained} at {x:?}"
                        );
                    }
                }
            }
            let jv = DMatrix::from_row_slice(n - 1, n, &jg.evaluate(&x).map_err(|e| e.to_string())?);
            for (k, s_k) in s.iter().enumerate() {
                let sk = constraint_matrix(&jg, k).map_err(|e| e.to_string())?;
                let skv = DMatrix::from_row_slice(n - 1, n - 1, &sk.evaluate(&x).map_err(|e| e.to_string())?);
                let rest = DVector::from_iterator(n - 1, (0..n).filter(|&i| i != k).map(|i| s_k[i]));
                let residual = (jv.column(k) + skv * rest).amax();
                ensure!(residual <= 1e-10, "{label}: linear-system residual {residual} along {k} at {x:?}");
            }
        }
        ensure!(used == 100, "{label}: only {used} nonsingular curve points");
    }
    Ok(())
}

fn criterion_9() -> Check {
    let mut pairs = 0;
    for (label, p) in [
        ("example 1a", common::example_1a()),
        ("example 1b", common::example_1b()),
        ("example 2", common::example_2()),
    ] {
        let calc = CurveCalculus::new(&p).map_err(|e| e.to_string())?;
        for sp in find_stationary(&p, &common::config(&p)).map_err(|e| e.to_string())? {
            let valid: Vec<_> = sp.valid_axes().collect();
            for a in &valid {
                for b in &valid {
                    if a.axis == b.axis {
                        continue;
                    }
                    let (k, j) = (a.axis, b.axis);
                    let s_kj = calc.coeffs(j).evaluate(&sp.point).map_err(|e| e.to_string())?.unwrap()[k];
                    let (fk, fj) = (a.second.unwrap(), b.second.unwrap());
                    ensure!(
                        rel(fj, fk * s_kj * s_kj, 1e-6),
                        "{label} at {:?}: f''_{j} = {fj}, f''_{k} s^2 = {}",
                        sp.point,
                        fk * s_kj * s_kj
                    );
                    pairs += 1;
                }
            }
        }
    }
    ensure!(pairs > 0, "no stationary point with two valid axes");

    let p = common::example_1b();
    let b = [2.0 / 3.0, (1.0f64 / 3.0).sqrt()];
    let calc = CurveCalculus::new(&p).map_err(|e| e.to_string())?;
    let fx = calc.derivative_value(0, 2, &b).map_err(|e| e.to_string())?;
    let fy = calc.derivative_value(1, 2, &b).map_err(|e| e.to_string())?;
    let s_xy = calc.coeffs(1).evaluate(&b).map_err(|e| e.to_string())?.unwrap()[0];
    ensure!(close(fx, 6.0, 1e-9) && close(fy, 8.0, 1e-9), "f''_x = {fx}, f''_y = {fy} at B");
    ensure!(close(s_xy, -2.0 / 3.0f64.sqrt(), 1e-12), "s_xy = {s_xy} at B");
    println!("    ({pairs} axis pairs checked)");
    Ok(())
}

fn full_pipeline(p: &Problem) -> Result<String, String> {
    let mut out = String::new();
    for (command, axis) in [
        (Command::Compare, None),
        (Command::Boundaries, Some("all")),
        (Command::Taylor, Some("all")),
    ] {
        let opts = RunOptions {
            axis: axis.map(str::to_string),
            ..RunOptions::new(command, p)
        };
        out.push_str(&run(p, &opts).map_err(|e| e.to_string())?.to_json());
    }
    Ok(out)
}

fn criterion_10() -> Check {
    let p = common::example_2();
    let first = full_pipeline(&p)?;
    let second = full_pipeline(&p)?;
    ensure!(first == second, "reports differ");
    ensure!(first.contains("\"stationary_points\""), "report lacks stationary points");
    Ok(())
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("Example 1a: stationary point, Det J, boundaries", criterion_1),
        ("Example 1a: Taylor series along x and y", criterion_2),
        ("Example 1b: three points, f''_x, Taylor along y at B", criterion_3),
        ("Example 2: four real stationary points", criterion_4),
        ("Example 2: boundary points per axis, six in all", criterion_5),
        ("Example 2: curve derivatives vs traced differences, Taylor at A", criterion_6),
        ("Lagrange equivalence on examples and 25 random problems", criterion_7),
        ("Infinitesimal coefficients: reciprocity, chain rule, linear system", criterion_8),
        ("Second-derivative transport between axes", criterion_9),
        ("Determinism of the Example 2 JSON report", criterion_10),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("criterion {:>2}: PASS  {name} ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name} ({ms} ms)\n    {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
