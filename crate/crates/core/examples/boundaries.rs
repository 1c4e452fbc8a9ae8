//! Extremal points of each coordinate along the constraint curve, where
//! Det S_k vanishes.

use ceqopt::problem::Problem;
use ceqopt::solver::SolverConfig;
use ceqopt::stationary::find_boundaries;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(
        &["x", "y", "z"],
        "x^2 - 2*y + z^3",
        &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
    )?;
    let cfg = SolverConfig::uniform(3, -3.0, 3.0);
    let all: Vec<usize> = (0..p.nvars()).collect();
    for axis in find_boundaries(&p, &all, &cfg)? {
        println!("{}: {:?}", p.names()[axis.axis], axis.status);
        for b in axis.points {
            println!("    {:?}", b.point);
        }
    }

    // A parabola is unbounded along y: Det S_y is the constant 1.
    let parabola = Problem::parse(&["x", "y"], "x^2 + 2*y^2", &[("x - y^2", 1.0)])?;
    let b = find_boundaries(&parabola, &[0, 1], &SolverConfig::uniform(2, -3.0, 3.0))?;
    println!("parabola: x {:?} {:?}, y {:?}", b[0].status, b[0].points[0].point, b[1].status);
    Ok(())
}
