//! Taylor series of the objective along the constraint curve, checked
//! against finite differences of a numerically traced curve.

use ceqopt::problem::Problem;
use ceqopt::taylor::CurveCalculus;
use ceqopt::trace::numeric_curve_derivatives;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(
        &["x", "y", "z"],
        "x^2 - 2*y + z^3",
        &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
    )?;
    let calc = CurveCalculus::new(&p)?;
    let names = p.names();
    println!("f' along y = {}", calc.derivative(1, 1)?.display(names));

    let a = [0.0, 3.0, -2.0];
    for (k, name) in names.iter().enumerate() {
        let s = calc.taylor(k, &a, 3)?;
        println!(
            "around A along {name}: {:?}{}",
            s.coefficients,
            if s.singular_parametrization { "  (singular parametrization)" } else { "" }
        );
    }

    // Independent check at a generic curve point.
    let start = [2f64.sqrt(), 0.0, -1.0];
    let sample = calc.tracer().trace(1, &start, 1e-3, 40)?;
    let numeric = numeric_curve_derivatives(&sample, sample.center_index, 3)?;
    let center = &sample.points[sample.center_index];
    for (m, est) in numeric.iter().enumerate() {
        let exact = calc.derivative_value(1, m + 1, center)?;
        println!("order {}: symbolic {exact:.10} numeric {est:.10}", m + 1);
    }
    Ok(())
}
