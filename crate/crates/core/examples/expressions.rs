//! Parse, differentiate, simplify and evaluate an expression, then compile
//! several related expressions into one tape.

use ceqopt::expr::{parse, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
    let f = parse("x^2*sin(y) + exp(x*y) / (1 + y^2)", &names)?;
    let fx = f.differentiate(0).simplify();
    let fy = f.differentiate(1).simplify();
    println!("f    = {}", f.display(&names));
    println!("df/dx = {}", fx.display(&names));
    println!("df/dy = {}", fy.display(&names));

    let tape = Tape::new(&[f.clone(), fx, fy]);
    println!("tape of {} instructions", tape.len());
    for point in [[0.5, 1.0], [-1.0, 2.0]] {
        println!("at {point:?}: {:?}", tape.eval(&point)?);
    }

    // Domain errors are reported rather than turned into NaN.
    let g = parse("log(x - y)", &names)?;
    match g.evaluate(&[0.0, 1.0]) {
        Ok(v) => println!("log(-1) = {v}"),
        Err(e) => println!("log(x - y) at (0, 1): {e}"),
    }
    Ok(())
}
