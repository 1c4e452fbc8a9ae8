//! Stationary points of a cubic objective on a space curve, with the
//! per-axis curve derivatives used to classify them.

use ceqopt::problem::Problem;
use ceqopt::solver::SolverConfig;
use ceqopt::stationary::Analyzer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(
        &["x", "y", "z"],
        "x^2 - 2*y + z^3",
        &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
    )?;
    let analyzer = Analyzer::new(&p)?;
    println!("Det J = {}", analyzer.determinant().display(p.names()));

    let cfg = SolverConfig::uniform(3, -3.0, 3.0);
    let out = analyzer.find_stationary(&cfg)?;
    println!("{} starts, {} converged", out.stats.starts, out.stats.converged);
    for sp in &out.points {
        println!("{:?}  f = {:.12}  {:?}", sp.point, sp.f_value, sp.label);
        for a in &sp.axes {
            let name = &p.names()[a.axis];
            println!(
                "    {name}: Det S = {:+.3e} valid = {} f' = {:?} f'' = {:?}",
                a.det_s, a.valid, a.first, a.second
            );
        }
    }
    for d in &out.diagnostics {
        println!("note [{}]: {}", d.code, d.message);
    }
    Ok(())
}
