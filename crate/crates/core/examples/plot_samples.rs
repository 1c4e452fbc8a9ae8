//! Curve samples and an objective contour grid as CSV, ready for any
//! plotting tool.

use ceqopt::plot::{sample_for_plot, PlotSpec};
use ceqopt::problem::Problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Problem::parse(&["x", "y"], "x^2 + 2*y^2 - 2*x*y^2", &[("x + y^2", 1.0)])?
        .with_uniform_box(-3.0, 3.0)?;
    let spec = PlotSpec {
        range: Some((-1.5, 1.5)),
        contour: Some(5),
        ..PlotSpec::new(1, 13)
    };
    print!("{}", sample_for_plot(&p, &spec)?.to_csv());
    Ok(())
}
