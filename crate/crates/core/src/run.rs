//! Command orchestration behind the `ceqopt` binary.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::lagrange::{benchmark_methods, cross_validate, solve_lagrange, DEFAULT_MULTIPLIER_BOX};
use crate::matrix::MatrixError;
use crate::plot::{sample_for_plot, PlotError, PlotSpec};
use crate::problem::Problem;
use crate::report::{ConfigEcho, CrossValidation, MethodStats, RunReport, TaylorEntry};
use crate::solver::{SolverConfig, SolverError};
use crate::stationary::{AnalysisError, Analyzer, Diagnostic};
use crate::taylor::TaylorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Boundaries,
    Taylor,
    Lagrange,
    Compare,
    Sample,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Boundaries => "boundaries",
            Command::Taylor => "taylor",
            Command::Lagrange => "lagrange",
            Command::Compare => "compare",
            Command::Sample => "sample",
        }
    }
}

impl FromStr for Command {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Command, RunError> {
        Ok(match s {
            "solve" => Command::Solve,
            "boundaries" => Command::Boundaries,
            "taylor" => Command::Taylor,
            "lagrange" => Command::Lagrange,
            "compare" => Command::Compare,
            "sample" => Command::Sample,
            _ => return Err(RunError::Input(format!("unknown command `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub command: Command,
    /// Variable name or `all`; commands pick their own default when absent.
    pub axis: Option<String>,
    pub at: Option<Vec<f64>>,
    pub order: usize,
    pub solver: SolverConfig,
    /// Max-norm distance under which the two methods' points are paired.
    pub match_tol: f64,
    pub range: Option<(f64, f64)>,
    pub count: usize,
    pub contour: Option<usize>,
    pub reps: usize,
    pub timing: bool,
}

impl RunOptions {
    pub fn new(command: Command, p: &Problem) -> RunOptions {
        RunOptions {
            command,
            axis: None,
            at: None,
            order: 4,
            solver: SolverConfig::new(p.bounds()),
            match_tol: 1e-6,
            range: None,
            count: 101,
            contour: None,
            reps: 5,
            timing: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Taylor(#[from] TaylorError),
    #[error(transparent)]
    Plot(#[from] PlotError),
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> RunError {
        RunError::Analysis(e.into())
    }
}

fn is_guard(e: &RunError) -> bool {
    matches!(
        e,
        RunError::Analysis(AnalysisError::Matrix(MatrixError::TooLarge { .. }))
            | RunError::Analysis(AnalysisError::Solver(SolverError::Matrix(MatrixError::TooLarge { .. })))
            | RunError::Analysis(AnalysisError::Taylor(TaylorError::SizeGuard { .. }))
            | RunError::Taylor(TaylorError::SizeGuard { .. })
    )
}

impl RunError {
    /// 2 for bad input, 4 for size guards, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if is_guard(self) {
            return 4;
        }
        match self {
            RunError::Input(_)
            | RunError::Analysis(AnalysisError::Solver(SolverError::Config(_)))
            | RunError::Analysis(AnalysisError::InvalidAxis { .. } | AnalysisError::BoxDimension { .. })
            | RunError::Plot(
                PlotError::InvalidAxis { .. } | PlotError::InvalidRange | PlotError::ZeroCount | PlotError::Contour,
            ) => 2,
            _ => 1,
        }
    }
}

fn resolve_axes(p: &Problem, axis: Option<&str>) -> Result<Vec<usize>, RunError> {
    match axis {
        None | Some("all") => Ok((0..p.nvars()).collect()),
        Some(name) => p
            .axis_index(name)
            .map(|k| vec![k])
            .ok_or_else(|| RunError::Input(format!("unknown axis `{name}`"))),
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn singular_axis_diagnostics(p: &Problem, report: &RunReport) -> Vec<Diagnostic> {
    let names = p.names();
    report
        .stationary_points
        .iter()
        .enumerate()
        .flat_map(|(i, sp)| {
            sp.axes.iter().filter(|a| !a.valid).map(move |a| {
                Diagnostic::new(
                    "singular_axis",
                    format!("stationary point {i}: Det S_{} vanishes, {} is not a valid parameter there", names[a.axis], names[a.axis]),
                )
            })
        })
        .collect()
}

pub fn run(p: &Problem, opts: &RunOptions) -> Result<RunReport, RunError> {
    let t0 = Instant::now();
    let n = p.nvars();
    if let Some(at) = &opts.at {
        if at.len() != n {
            return Err(RunError::Input(format!("--at needs {n} coordinates, found {}", at.len())));
        }
    }
    let axes = match opts.command {
        Command::Sample => match opts.axis.as_deref() {
            Some("all") => return Err(RunError::Input("sample needs a single axis".into())),
            a => resolve_axes(p, a.or(Some(&p.names()[0])))?,
        },
        _ => resolve_axes(p, opts.axis.as_deref())?,
    };
    let cfg = &opts.solver;
    cfg.validate()?;
    let config = ConfigEcho {
        command: opts.command.name().to_string(),
        axes: axes.iter().map(|&k| p.names()[k].clone()).collect(),
        at: opts.at.clone(),
        order: opts.order,
        solver: cfg.clone(),
    };
    let mut report = RunReport::new(p, config);
    let mut timing = BTreeMap::new();

    match opts.command {
        Command::Solve => {
            let an = Analyzer::new(p)?;
            let out = an.find_stationary(cfg)?;
            report.stationary_points = out.points;
            report.diagnostics = out.diagnostics;
        }
        Command::Boundaries => {
            let an = Analyzer::new(p)?;
            report.boundaries = an.find_boundaries(&axes, cfg)?;
        }
        Command::Taylor => {
            if opts.order == 0 {
                return Err(RunError::Input("--order must be at least 1".into()));
            }
            let an = Analyzer::new(p)?;
            let centers = match &opts.at {
                Some(at) => vec![at.clone()],
                None => {
                    let out = an.find_stationary(cfg)?;
                    report.diagnostics = out.diagnostics;
                    report.stationary_points = out.points;
                    report.stationary_points.iter().map(|sp| sp.point.clone()).collect()
                }
            };
            for center in centers {
                for &k in &axes {
                    let result = an.calculus().taylor(k, &center, opts.order);
                    if let Err(e @ TaylorError::SizeGuard { .. }) = result {
                        return Err(e.into());
                    }
                    report.taylor.push(TaylorEntry {
                        axis: p.names()[k].clone(),
                        center: center.clone(),
                        error: result.as_ref().err().map(|e| e.to_string()),
                        series: result.ok(),
                    });
                }
            }
        }
        Command::Lagrange => {
            let out = solve_lagrange(p, cfg, DEFAULT_MULTIPLIER_BOX)?;
            report.diagnostics = out.diagnostics;
            report.cross_validation = Some(CrossValidation {
                lagrange: MethodStats {
                    starts: out.starts,
                    total_iterations: out.total_iterations,
                    unknowns: 2 * n - 1,
                    roots: out.points.len(),
                },
                lagrange_points: out.points,
                matching: None,
                tolerance: opts.match_tol,
                determinant: None,
            });
        }
        Command::Compare => {
            let an = Analyzer::new(p)?;
            let det = an.find_stationary(cfg)?;
            let lag = solve_lagrange(p, cfg, DEFAULT_MULTIPLIER_BOX)?;
            let matching = cross_validate(p, &det.points, &lag.points, opts.match_tol);
            report.diagnostics = det.diagnostics;
            report.diagnostics.extend(lag.diagnostics);
            if !matching.is_full_match() {
                report.diagnostics.push(Diagnostic::new(
                    "methods_disagree",
                    format!(
                        "{} determinant-only and {} Lagrange-only points",
                        matching.determinant_only.len(),
                        matching.lagrange_only.len()
                    ),
                ));
            }
            report.cross_validation = Some(CrossValidation {
                determinant: Some(MethodStats {
                    starts: det.stats.starts,
                    total_iterations: det.stats.total_iterations,
                    unknowns: n,
                    roots: det.points.len(),
                }),
                lagrange: MethodStats {
                    starts: lag.starts,
                    total_iterations: lag.total_iterations,
                    unknowns: 2 * n - 1,
                    roots: lag.points.len(),
                },
                lagrange_points: lag.points,
                matching: Some(matching),
                tolerance: opts.match_tol,
            });
            report.stationary_points = det.points;
            if opts.timing {
                let bench = benchmark_methods(p, cfg, opts.reps)?;
                timing.insert("determinant_median".to_string(), bench.determinant.median_ms);
                timing.insert("lagrange_median".to_string(), bench.lagrange.median_ms);
            }
        }
        Command::Sample => {
            let spec = PlotSpec {
                axis: axes[0],
                range: opts.range,
                count: opts.count,
                anchor: opts.at.clone(),
                contour: opts.contour,
                seed: cfg.seed,
            };
            let data = sample_for_plot(p, &spec)?;
            if data.sample.truncated.0 || data.sample.truncated.1 {
                report.diagnostics.push(Diagnostic::new(
                    "trace_truncated",
                    format!(
                        "reached {} of {} stations along {}",
                        data.sample.points.len(),
                        data.requested,
                        p.names()[axes[0]]
                    ),
                ));
            }
            report.plot = Some(data);
        }
    }

    let extra = singular_axis_diagnostics(p, &report);
    report.diagnostics.extend(extra);
    report.diagnostics.sort();
    report.diagnostics.dedup();
    if opts.timing {
        timing.insert("total".to_string(), ms_since(t0));
        report.timing_ms = Some(timing);
    }
    Ok(report)
}
