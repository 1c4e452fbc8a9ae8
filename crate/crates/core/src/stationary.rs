//! Stationary points from `{Det J = 0, g = C}`, boundary points of the
//! constraint curve from `{Det S_k = 0, g = C}`, and classification by the
//! sign of the curve-restricted second derivative.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, Tape};
use crate::matrix::{constraint_jacobian, constraint_matrix, determinant, problem_jacobian, MatrixError};
use crate::problem::Problem;
use crate::solver::{max_norm, multistart_solve_with_stats, SolveStats, SolverConfig, SolverError};
use crate::taylor::{CurveCalculus, TaylorError};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Taylor(#[from] TaylorError),
    #[error("point is not stationary (residual {residual:e})")]
    NotStationary { residual: f64 },
    #[error("axis {axis} out of range for {nvars} variables")]
    InvalidAxis { axis: usize, nvars: usize },
    #[error("search box has {got} intervals, problem has {expected} variables")]
    BoxDimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Minimum,
    Maximum,
    Inflection,
    Degenerate,
    Indeterminate,
}

/// Per-axis data at a stationary point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisData {
    pub axis: usize,
    pub det_s: f64,
    /// `|Det S_k|` exceeds the singular tolerance, so `x_k` parametrizes
    /// the curve here.
    pub valid: bool,
    pub first: Option<f64>,
    pub second: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub point: Vec<f64>,
    pub f_value: f64,
    pub residuals: Vec<f64>,
    pub axes: Vec<AxisData>,
    pub label: Label,
    pub notes: Vec<String>,
}

impl StationaryPoint {
    pub fn valid_axes(&self) -> impl Iterator<Item = &AxisData> {
        self.axes.iter().filter(|a| a.valid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub axis: usize,
    pub point: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisStatus {
    Solved,
    /// `Det S_k` is a nonzero constant: `x_k` is never extremal.
    Unbounded,
    /// `Det S_k` vanishes identically.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisBoundaries {
    pub axis: usize,
    pub status: AxisStatus,
    pub points: Vec<BoundaryPoint>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// Outcome of a stationary-point search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryOutcome {
    pub points: Vec<StationaryPoint>,
    pub diagnostics: Vec<Diagnostic>,
    pub stats: SolveStats,
}

pub enum BoundarySystem {
    Equations(Vec<Expr>),
    Unbounded,
    Degenerate,
}

fn rank_deficient(n: usize, jg_row_major: &[f64]) -> bool {
    let sv = DMatrix::from_row_slice(n - 1, n, jg_row_major).singular_values();
    sv.min() <= 1e-10 * sv.max()
}

fn dependent_constraints_diagnostic() -> Diagnostic {
    Diagnostic::new(
        "dependent_constraints",
        "constraint gradients are linearly dependent at every sampled point",
    )
}

/// Diagnostic when the constraint Jacobian is rank deficient at every one
/// of 16 seeded sample points of the box.
pub fn dependent_constraints(p: &Problem, cfg: &SolverConfig) -> Option<Diagnostic> {
    let n = p.nvars();
    let residuals = p.constraint_residuals();
    let entries: Vec<Expr> = residuals
        .iter()
        .flat_map(|g| (0..n).map(move |j| g.differentiate(j)))
        .collect();
    let tape = Tape::new(&entries);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut tested = 0;
    for _ in 0..64 {
        let x: Vec<f64> = cfg.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        let Ok(j) = tape.eval(&x) else { continue };
        if !rank_deficient(n, &j) {
            return None;
        }
        tested += 1;
        if tested == 16 {
            break;
        }
    }
    (tested > 0).then(dependent_constraints_diagnostic)
}

/// `[Det J, g_1 - C_1, ..., g_{N-1} - C_{N-1}]`.
pub fn stationary_system(p: &Problem) -> Result<Vec<Expr>, AnalysisError> {
    let det = determinant(&problem_jacobian(p.objective(), &p.constraint_functions())?)?;
    Ok(std::iter::once(det).chain(p.constraint_residuals()).collect())
}

/// `[Det S_k, g_1 - C_1, ...]`, or a marker when `Det S_k` is constant.
pub fn boundary_system(p: &Problem, k: usize) -> Result<BoundarySystem, AnalysisError> {
    if k >= p.nvars() {
        return Err(AnalysisError::InvalidAxis {
            axis: k,
            nvars: p.nvars(),
        });
    }
    let jg = constraint_jacobian(&p.constraint_functions())?;
    let det = determinant(&constraint_matrix(&jg, k)?)?;
    Ok(match det.as_const() {
        Some(0.0) => BoundarySystem::Degenerate,
        Some(_) => BoundarySystem::Unbounded,
        None => BoundarySystem::Equations(std::iter::once(det).chain(p.constraint_residuals()).collect()),
    })
}

/// Stationary points of `p` in the box of `cfg`.
pub fn find_stationary(p: &Problem, cfg: &SolverConfig) -> Result<Vec<StationaryPoint>, AnalysisError> {
    Ok(Analyzer::new(p)?.find_stationary(cfg)?.points)
}

/// Boundary points along the requested axes.
pub fn find_boundaries(
    p: &Problem,
    axes: &[usize],
    cfg: &SolverConfig,
) -> Result<Vec<AxisBoundaries>, AnalysisError> {
    Analyzer::new(p)?.find_boundaries(axes, cfg)
}

/// Classify a point satisfying the stationarity system within `residual_tol`.
pub fn classify(point: &[f64], p: &Problem, residual_tol: f64) -> Result<StationaryPoint, AnalysisError> {
    Analyzer::new(p)?.classify(point, residual_tol)
}

/// Symbolic pieces of one problem, built once and reused across searches.
pub struct Analyzer {
    problem: Problem,
    det_j: Expr,
    system: Vec<Expr>,
    system_tape: Tape,
    jacobian: Tape,
    calc: CurveCalculus,
}

impl Analyzer {
    pub fn new(p: &Problem) -> Result<Analyzer, AnalysisError> {
        let j = problem_jacobian(p.objective(), &p.constraint_functions())?;
        let system = stationary_system(p)?;
        Ok(Analyzer {
            problem: p.clone(),
            det_j: system[0].clone(),
            system_tape: Tape::new(&system),
            system,
            jacobian: Tape::new(j.entries()),
            calc: CurveCalculus::new(p)?,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn calculus(&self) -> &CurveCalculus {
        &self.calc
    }

    pub fn determinant(&self) -> &Expr {
        &self.det_j
    }

    pub fn stationary_system(&self) -> &[Expr] {
        &self.system
    }

    fn check_box(&self, cfg: &SolverConfig) -> Result<(), AnalysisError> {
        if cfg.bounds.len() != self.problem.nvars() {
            return Err(AnalysisError::BoxDimension {
                expected: self.problem.nvars(),
                got: cfg.bounds.len(),
            });
        }
        Ok(())
    }

    /// Problem-level warnings: a determinant that vanishes identically and
    /// constraint gradients that are dependent everywhere.
    pub fn degeneracy(&self, cfg: &SolverConfig) -> Vec<Diagnostic> {
        let n = self.problem.nvars();
        let mut out = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        let mut tested = 0;
        let mut det_zero = 0;
        let mut rank_short = 0;
        for _ in 0..64 {
            let x: Vec<f64> = cfg.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            let (Ok(det), Ok(j)) = (self.system_tape.eval(&x), self.jacobian.eval(&x)) else {
                continue;
            };
            tested += 1;
            let hadamard: f64 = j.chunks(n).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).product();
            if det[0].abs() <= 1e-12 * hadamard {
                det_zero += 1;
            }
            if rank_deficient(n, &j[n..]) {
                rank_short += 1;
            }
            if tested == 16 {
                break;
            }
        }
        if self.det_j.is_zero() || (tested > 0 && det_zero == tested) {
            out.push(Diagnostic::new(
                "determinant_identically_zero",
                "Det J vanishes everywhere: the objective gradient is always a combination of the constraint gradients",
            ));
        }
        if tested > 0 && rank_short == tested {
            out.push(dependent_constraints_diagnostic());
        }
        out
    }

    pub fn find_stationary(&self, cfg: &SolverConfig) -> Result<StationaryOutcome, AnalysisError> {
        self.check_box(cfg)?;
        let diagnostics = self.degeneracy(cfg);
        if diagnostics.iter().any(|d| d.code == "determinant_identically_zero") {
            return Ok(StationaryOutcome {
                points: Vec::new(),
                diagnostics,
                stats: SolveStats::default(),
            });
        }
        let (roots, stats) = multistart_solve_with_stats(&self.system, cfg)?;
        let points = roots
            .par_iter()
            .map(|r| self.classify(&r.point, cfg.residual_tol))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StationaryOutcome {
            points,
            diagnostics,
            stats,
        })
    }

    pub fn classify(&self, point: &[f64], residual_tol: f64) -> Result<StationaryPoint, AnalysisError> {
        let residuals = self.system_tape.eval(point).map_err(TaylorError::from)?;
        let residual = max_norm(&residuals);
        if residual > residual_tol {
            return Err(AnalysisError::NotStationary { residual });
        }
        let f_value = self.calc.tracer().objective(point).map_err(TaylorError::from)?;
        let tol = self.calc.singular_tol(point);
        let finite = |v: Result<f64, TaylorError>| v.ok().filter(|x| x.is_finite());
        let mut axes = Vec::with_capacity(self.problem.nvars());
        for k in 0..self.problem.nvars() {
            let det_s = self.calc.det_s(k, point).unwrap_or(f64::NAN);
            let valid = det_s.abs() > tol;
            axes.push(AxisData {
                axis: k,
                det_s,
                valid,
                first: finite(self.calc.derivative_value(k, 1, point)),
                second: finite(self.calc.derivative_value(k, 2, point)),
            });
        }
        let mut notes = Vec::new();
        let names = self.problem.names();
        for a in axes.iter().filter(|a| !a.valid) {
            notes.push(format!(
                "Det S_{} vanishes here; the curve folds over the {} axis",
                names[a.axis], names[a.axis]
            ));
        }
        let label = self.label(point, f_value, &axes, &mut notes);
        Ok(StationaryPoint {
            point: point.to_vec(),
            f_value,
            residuals,
            axes,
            label,
            notes,
        })
    }

    fn label(&self, point: &[f64], f: f64, axes: &[AxisData], notes: &mut Vec<String>) -> Label {
        let tol = 1e-7 * (1.0 + f.abs());
        let valid: Vec<&AxisData> = axes.iter().filter(|a| a.valid).collect();
        if valid.is_empty() {
            return Label::Indeterminate;
        }
        let Some(seconds) = valid.iter().map(|a| a.second).collect::<Option<Vec<f64>>>() else {
            notes.push("second derivative could not be evaluated on a valid axis".into());
            return Label::Indeterminate;
        };
        if let Some(pos) = seconds.iter().position(|s| s.abs() <= tol) {
            let third = self.calc.derivative_value(valid[pos].axis, 3, point).ok();
            return match third {
                Some(t) if t.is_finite() && t.abs() > tol => Label::Inflection,
                _ => Label::Degenerate,
            };
        }
        if seconds.iter().all(|&s| s > tol) {
            Label::Minimum
        } else if seconds.iter().all(|&s| s < -tol) {
            Label::Maximum
        } else {
            notes.push("second derivatives disagree in sign across axes".into());
            Label::Indeterminate
        }
    }

    pub fn find_boundaries(&self, axes: &[usize], cfg: &SolverConfig) -> Result<Vec<AxisBoundaries>, AnalysisError> {
        self.check_box(cfg)?;
        let mut out = Vec::with_capacity(axes.len());
        for &k in axes {
            let entry = match boundary_system(&self.problem, k)? {
                BoundarySystem::Unbounded => AxisBoundaries {
                    axis: k,
                    status: AxisStatus::Unbounded,
                    points: Vec::new(),
                },
                BoundarySystem::Degenerate => AxisBoundaries {
                    axis: k,
                    status: AxisStatus::Degenerate,
                    points: Vec::new(),
                },
                BoundarySystem::Equations(sys) => {
                    let (roots, _) = multistart_solve_with_stats(&sys, cfg)?;
                    let tape = Tape::new(&sys);
                    let points = roots
                        .into_iter()
                        .map(|r| BoundaryPoint {
                            axis: k,
                            residuals: tape.eval(&r.point).unwrap_or_default(),
                            point: r.point,
                        })
                        .collect();
                    AxisBoundaries {
                        axis: k,
                        status: AxisStatus::Solved,
                        points,
                    }
                }
            };
            out.push(entry);
        }
        Ok(out)
    }
}
