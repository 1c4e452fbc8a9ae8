//! The problem Jacobian, its determinant, the constraint matrices S_k and
//! the infinitesimal coefficients s_{i,k} = dx_i/dx_k along the curve.

use ceqopt::matrix::{constraint_jacobian, constraint_matrix, determinant, infinitesimal_coeffs, problem_jacobian};
use ceqopt::problem::Problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(
        &["x", "y", "z"],
        "x^2 - 2*y + z^3",
        &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
    )?;
    let names = p.names();
    let g = p.constraint_functions();

    let j = problem_jacobian(p.objective(), &g)?;
    println!("Det J = {}", determinant(&j)?.display(names));

    let jg = constraint_jacobian(&g)?;
    for k in 0..p.nvars() {
        let s = constraint_matrix(&jg, k)?;
        println!("Det S_{} = {}", names[k], determinant(&s)?.display(names));
        let coeffs = infinitesimal_coeffs(&jg, k)?;
        for i in (0..p.nvars()).filter(|&i| i != k) {
            println!("    s_{},{} = {}", names[i], names[k], coeffs.coefficient(i).display(names));
        }
    }

    // dx/dz and dy/dz at (sqrt(2), -1, 0).
    let at = [2f64.sqrt(), -1.0, 0.0];
    let s_z = infinitesimal_coeffs(&jg, 2)?.evaluate(&at)?;
    println!("s_(.,z) at {at:?} = {s_z:?}");
    Ok(())
}
