//! The classical Lagrange formulation against the determinant method:
//! matched points, multiplier residuals and solver effort.

use ceqopt::lagrange::{benchmark_methods, cross_validate, find_stationary_lagrange};
use ceqopt::problem::Problem;
use ceqopt::solver::SolverConfig;
use ceqopt::stationary::find_stationary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(
        &["x", "y", "z"],
        "x + 2*y + 3*z",
        &[("x^2 + y^2 + z^2", 1.0), ("x + y + z", 0.0)],
    )?;
    let cfg = SolverConfig::uniform(3, -2.0, 2.0);
    let det = find_stationary(&p, &cfg)?;
    let lag = find_stationary_lagrange(&p, &cfg)?;
    for l in &lag {
        println!("x = {:?}  lambda = {:?}", l.point, l.multipliers);
    }
    let report = cross_validate(&p, &det, &lag, 1e-7);
    for m in &report.matched {
        println!(
            "determinant #{} <-> lagrange #{}: distance {:.1e}, multiplier residual {:.1e}",
            m.determinant_index,
            m.lagrange_index,
            m.distance,
            m.multiplier_residual.unwrap_or(f64::NAN)
        );
    }
    println!("full match: {}", report.is_full_match());

    let bench = benchmark_methods(&p, &cfg, 3)?;
    for (name, t) in [("determinant", &bench.determinant), ("lagrange", &bench.lagrange)] {
        println!(
            "{name:>11}: {} unknowns, {} iterations, {:.2} ms median",
            t.unknowns, t.total_iterations, t.median_ms
        );
    }
    Ok(())
}
