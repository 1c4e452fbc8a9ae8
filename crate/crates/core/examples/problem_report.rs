//! Load a problem file, run a pipeline and emit the JSON and CSV reports.

use ceqopt::io::{load_problem, print_problem};
use ceqopt::run::{run, Command, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/problems/example1b.txt").to_string());
    let p = load_problem(&path)?;
    print!("{}", print_problem(&p));

    let opts = RunOptions {
        order: 3,
        ..RunOptions::new(Command::Taylor, &p)
    };
    let report = run(&p, &opts)?;
    println!("{}", report.to_json());
    print!("{}", report.to_csv());
    Ok(())
}
