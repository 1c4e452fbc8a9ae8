use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ceqopt::io::load_problem;
use ceqopt::report::{format_g17, RunReport};
use ceqopt::run::{run, Command, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Stationary points from Det J = 0 and the constraints.
    Solve,
    /// Extrema of each coordinate along the constraint curve.
    Boundaries,
    /// Taylor series of f along the curve.
    Taylor,
    /// Classical Lagrange-multiplier solve.
    Lagrange,
    /// Both methods side by side.
    Compare,
    /// Curve points with objective values as CSV.
    Sample,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Boundaries => Command::Boundaries,
            Cmd::Taylor => Command::Taylor,
            Cmd::Lagrange => Command::Lagrange,
            Cmd::Compare => Command::Compare,
            Cmd::Sample => Command::Sample,
        }
    }
}

/// Stationary points of an objective under N-1 equality constraints.
#[derive(Debug, Parser)]
#[command(name = "ceqopt", version)]
struct Cli {
    command: Cmd,
    /// Problem file (`vars:`, `f:`, `g:` and `box:` lines).
    problem: PathBuf,
    /// Variable name, or `all`.
    #[arg(long)]
    axis: Option<String>,
    /// Point as comma-separated coordinates.
    #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
    at: Option<Coords>,
    /// Taylor order.
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Start-grid nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Random starts on top of the grid.
    #[arg(long)]
    starts: Option<usize>,
    /// Seed for the random starts.
    #[arg(long)]
    seed: Option<u64>,
    /// Newton residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Distance under which points of the two methods are paired.
    #[arg(long, default_value_t = 1e-6)]
    match_tol: f64,
    /// Sample range `lo,hi` along the axis.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<(f64, f64)>,
    /// Number of sample stations.
    #[arg(long, default_value_t = 101)]
    count: usize,
    /// Also emit a KxK objective grid (two-variable problems).
    #[arg(long)]
    contour: Option<usize>,
    /// Repetitions for `compare --timing`.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Record wall-clock timings (makes the report non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the CSV tables here (`-` for stdout).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Coords(Vec<f64>);

fn parse_coords(s: &str) -> Result<Coords, String> {
    parse_list(s).map(Coords)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("malformed number `{}`", t.trim())))
        .collect()
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match parse_list(s)?[..] {
        [lo, hi] => Ok((lo, hi)),
        _ => Err("expected `lo,hi`".into()),
    }
}

fn write_out(path: &Path, text: &str) -> std::io::Result<()> {
    if path.as_os_str() == "-" {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(path, text)
    }
}

fn summary(r: &RunReport) -> String {
    let names = &r.problem.variables;
    let fmt_point = |p: &[f64]| {
        let parts: Vec<String> = names.iter().zip(p).map(|(n, v)| format!("{n}={}", format_g17(*v))).collect();
        format!("({})", parts.join(", "))
    };
    let mut lines = Vec::new();
    for sp in &r.stationary_points {
        lines.push(format!("{:?} {} f={}", sp.label, fmt_point(&sp.point), format_g17(sp.f_value)));
    }
    for b in &r.boundaries {
        lines.push(format!("{}: {:?}, {} points", names[b.axis], b.status, b.points.len()));
    }
    for t in &r.taylor {
        match &t.series {
            Some(s) => lines.push(format!("{} at {}: {:?}", t.axis, fmt_point(&t.center), s.coefficients)),
            None => lines.push(format!("{} at {}: {}", t.axis, fmt_point(&t.center), t.error.as_deref().unwrap_or(""))),
        }
    }
    if let Some(cv) = &r.cross_validation {
        lines.push(format!("{} Lagrange points", cv.lagrange_points.len()));
    }
    if let Some(d) = &r.plot {
        lines.push(format!("{} curve samples", d.sample.points.len()));
    }
    for d in &r.diagnostics {
        lines.push(format!("warning[{}]: {}", d.code, d.message));
    }
    if lines.is_empty() {
        lines.push("nothing found".into());
    }
    lines.join("\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let problem = match load_problem(&cli.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.problem.display());
            return ExitCode::from(2);
        }
    };
    let mut opts = RunOptions::new(cli.command.into(), &problem);
    opts.axis = cli.axis;
    opts.at = cli.at.map(|c| c.0);
    opts.order = cli.order;
    opts.match_tol = cli.match_tol;
    opts.range = cli.range;
    opts.count = cli.count;
    opts.contour = cli.contour;
    opts.reps = cli.reps;
    opts.timing = cli.timing;
    if let Some(g) = cli.grid {
        opts.solver.grid_per_axis = g;
    }
    if let Some(s) = cli.starts {
        opts.solver.random_starts = s;
    }
    if let Some(s) = cli.seed {
        opts.solver.seed = s;
    }
    if let Some(t) = cli.tol {
        opts.solver.residual_tol = t;
    }

    let report = match run(&problem, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    let mut outputs = Vec::new();
    if let Some(p) = &cli.json {
        outputs.push((p.clone(), report.to_json()));
    }
    if let Some(p) = &cli.csv {
        outputs.push((p.clone(), report.to_csv()));
    }
    if outputs.is_empty() {
        let text = match opts.command {
            Command::Sample => report.to_csv(),
            _ => report.to_json(),
        };
        outputs.push((PathBuf::from("-"), text));
    } else if !outputs.iter().any(|(p, _)| p.as_os_str() == "-") {
        println!("{}", summary(&report));
    }
    for (path, text) in outputs {
        if let Err(e) = write_out(&path, &text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    if report.found_nothing() {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}
