//! Single-start damped Newton and the deterministic multistart driver on a
//! small polynomial system with several real roots.

use ceqopt::expr::parse;
use ceqopt::matrix::ExprMatrix;
use ceqopt::solver::{multistart_solve_with_stats, newton_solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
    // A circle of radius 2 meets the hyperbola x*y = 1 in four points.
    let system = vec![parse("x^2 + y^2 - 4", &names)?, parse("x*y - 1", &names)?];
    let jac_entries = system
        .iter()
        .flat_map(|e| (0..2).map(move |j| e.differentiate(j).simplify()))
        .collect();
    let jac = ExprMatrix::new(2, 2, jac_entries)?;

    let cfg = SolverConfig::uniform(2, -3.0, 3.0);
    match newton_solve(&system, &jac, &[2.0, 0.5], &cfg)? {
        Ok(root) => println!("from (2, 0.5): {:?} after {} iterations", root.point, root.iterations),
        Err(failure) => println!("from (2, 0.5): {failure:?}"),
    }

    let (roots, stats) = multistart_solve_with_stats(&system, &cfg)?;
    println!("{} starts, {} converged, {} distinct roots", stats.starts, stats.converged, roots.len());
    for r in roots {
        println!("    {:?}  residual {:.1e}", r.point, r.residual_norm);
    }
    Ok(())
}
