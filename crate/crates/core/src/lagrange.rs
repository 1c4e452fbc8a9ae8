//! Classical Lagrange-multiplier formulation, used as an independent oracle
//! for the determinant method and as a benchmark against it.
//!
//! Sign convention: `L = f - sum_k lambda_k (g_k - C_k)`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{Expr, Tape};
use crate::problem::Problem;
use crate::solver::{
    converge_all, dedupe, multistart_solve_with_stats, CompiledSystem, Root, SolverConfig,
    SolverError,
};
use crate::stationary::{dependent_constraints, stationary_system, AnalysisError, Diagnostic, StationaryPoint};

pub const DEFAULT_MULTIPLIER_BOX: (f64, f64) = (-100.0, 100.0);

/// Relative singular-value floor below which the constraint Jacobian is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangePoint {
    pub point: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub residual_norm: f64,
}

/// `df/dx_j - sum_k lambda_k dg_k/dx_j` for each `j`, then `g_k - C_k`, over
/// the variables `x_1..x_N, lambda_1..lambda_{N-1}`.
pub fn lagrangian_system(p: &Problem) -> Vec<Expr> {
    let n = p.nvars();
    let g = p.constraint_functions();
    let mut out = Vec::with_capacity(2 * n - 1);
    for j in 0..n {
        let mut e = p.objective().differentiate(j);
        for (k, gk) in g.iter().enumerate() {
            let dg = gk.differentiate(j);
            if !dg.is_zero() {
                e = e - Expr::var(n + k) * dg;
            }
        }
        out.push(e.simplify());
    }
    out.extend(p.constraint_residuals());
    out
}

/// Gradient of `f` and constraint Jacobian, compiled together.
pub struct GradientTape {
    n: usize,
    tape: Tape,
}

impl GradientTape {
    pub fn new(p: &Problem) -> GradientTape {
        let n = p.nvars();
        let mut entries: Vec<Expr> = (0..n).map(|j| p.objective().differentiate(j)).collect();
        for g in p.constraint_functions() {
            entries.extend((0..n).map(|j| g.differentiate(j)));
        }
        GradientTape {
            n,
            tape: Tape::new(&entries),
        }
    }

    fn eval(&self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let v = self.tape.eval(x).ok()?;
        let grad = DVector::from_column_slice(&v[..self.n]);
        // Columns are constraint gradients.
        let jt = DMatrix::from_row_slice(self.n - 1, self.n, &v[self.n..]).transpose();
        Some((grad, jt))
    }

    /// Least-squares multipliers at `x`, the residual
    /// `|grad f - sum lambda_k grad g_k|`, and the smallest and largest
    /// singular values of the constraint Jacobian.
    pub fn least_squares(&self, x: &[f64]) -> Option<(Vec<f64>, f64, f64, f64)> {
        let (grad, jt) = self.eval(x)?;
        let svd = jt.clone().svd(true, true);
        let smin = svd.singular_values.min();
        let smax = svd.singular_values.max();
        let lambda = svd.solve(&grad, 1e-12 * smax.max(f64::MIN_POSITIVE)).ok()?;
        let residual = (&grad - &jt * &lambda).norm();
        Some((lambda.iter().copied().collect(), residual, smin, smax))
    }

    /// `|grad f - sum lambda_k grad g_k|` for given multipliers.
    pub fn multiplier_residual(&self, x: &[f64], lambda: &[f64]) -> Option<f64> {
        let (grad, jt) = self.eval(x)?;
        Some((grad - jt * DVector::from_column_slice(lambda)).norm())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangeOutcome {
    pub points: Vec<LagrangePoint>,
    pub diagnostics: Vec<Diagnostic>,
    pub starts: usize,
    pub total_iterations: usize,
}

/// Lagrange-method stationary points, deduplicated on their `x` part.
pub fn find_stationary_lagrange(p: &Problem, cfg: &SolverConfig) -> Result<Vec<LagrangePoint>, SolverError> {
    Ok(solve_lagrange(p, cfg, DEFAULT_MULTIPLIER_BOX)?.points)
}

/// Starts: the `x` grid of `cfg`, each paired with least-squares
/// multipliers, plus seeded random points over the `x` box and the
/// multiplier box.
pub fn solve_lagrange(
    p: &Problem,
    cfg: &SolverConfig,
    multiplier_box: (f64, f64),
) -> Result<LagrangeOutcome, SolverError> {
    cfg.validate()?;
    let n = p.nvars();
    if cfg.bounds.len() != n {
        return Err(SolverError::NotSquare {
            equations: n,
            unknowns: cfg.bounds.len(),
        });
    }
    let diagnostics: Vec<Diagnostic> = dependent_constraints(p, cfg).into_iter().collect();
    let system = lagrangian_system(p);
    let sys = CompiledSystem::new(&system);
    let grads = GradientTape::new(p);
    let (mlo, mhi) = multiplier_box;

    let mut grid_cfg = cfg.clone();
    grid_cfg.random_starts = 0;
    let mut starts: Vec<Vec<f64>> = crate::solver::start_points(&grid_cfg)
        .into_iter()
        .map(|x| {
            let lambda = grads
                .least_squares(&x)
                .map(|(l, ..)| l)
                .filter(|l| l.iter().all(|v| v.is_finite()))
                .unwrap_or_else(|| vec![0.0; n - 1]);
            x.into_iter().chain(lambda).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        let mut s: Vec<f64> = cfg.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        s.extend((0..n - 1).map(|_| rng.gen_range(mlo..mhi)));
        starts.push(s);
    }

    let mut ext = cfg.clone();
    ext.bounds.extend(std::iter::repeat_n(multiplier_box, n - 1));
    let (roots, stats) = converge_all(&sys, &starts, &ext, |q| cfg.inflated_contains(&q[..n]));
    let projected: Vec<Root> = roots
        .iter()
        .map(|r| Root {
            point: r.point[..n].to_vec(),
            residual_norm: r.residual_norm,
            iterations: r.iterations,
            start_index: r.start_index,
        })
        .collect();
    let points = dedupe(projected, cfg.dedupe_tol)
        .into_iter()
        .map(|r| {
            let full = roots
                .iter()
                .find(|q| q.start_index == r.start_index)
                .map(|q| q.point[n..].to_vec())
                .unwrap_or_default();
            LagrangePoint {
                point: r.point,
                multipliers: full,
                residual_norm: r.residual_norm,
            }
        })
        .collect();
    Ok(LagrangeOutcome {
        points,
        diagnostics,
        starts: stats.starts,
        total_iterations: stats.total_iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchedPair {
    pub determinant_index: usize,
    pub lagrange_index: usize,
    pub distance: f64,
    /// `|grad f - sum lambda_k grad g_k|` at the determinant point using the
    /// Lagrange multipliers.
    pub multiplier_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnmatchedDeterminantPoint {
    pub index: usize,
    pub least_squares_residual: Option<f64>,
    /// The constraint gradients are dependent here, so `Det J` vanishes
    /// without any multipliers existing.
    pub rank_deficient: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MatchReport {
    pub matched: Vec<MatchedPair>,
    pub determinant_only: Vec<UnmatchedDeterminantPoint>,
    pub lagrange_only: Vec<usize>,
}

impl MatchReport {
    pub fn is_full_match(&self) -> bool {
        self.determinant_only.is_empty() && self.lagrange_only.is_empty()
    }
}

/// Pair up points of the two methods by max-norm distance, closest first.
pub fn cross_validate(
    p: &Problem,
    det: &[StationaryPoint],
    lag: &[LagrangePoint],
    tol: f64,
) -> MatchReport {
    let grads = GradientTape::new(p);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in det.iter().enumerate() {
        for (j, l) in lag.iter().enumerate() {
            let dist = d
                .point
                .iter()
                .zip(&l.point)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if dist <= tol {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; det.len()];
    let mut lag_used = vec![false; lag.len()];
    let mut report = MatchReport::default();
    for (dist, i, j) in pairs {
        if det_used[i] || lag_used[j] {
            continue;
        }
        det_used[i] = true;
        lag_used[j] = true;
        report.matched.push(MatchedPair {
            determinant_index: i,
            lagrange_index: j,
            distance: dist,
            multiplier_residual: grads.multiplier_residual(&det[i].point, &lag[j].multipliers),
        });
    }
    report.matched.sort_by_key(|m| m.determinant_index);
    report.determinant_only = (0..det.len())
        .filter(|&i| !det_used[i])
        .map(|i| {
            let ls = grads.least_squares(&det[i].point);
            UnmatchedDeterminantPoint {
                index: i,
                least_squares_residual: ls.as_ref().map(|l| l.1),
                rank_deficient: ls.is_some_and(|l| l.2 <= RANK_TOL * l.3.max(1.0)),
            }
        })
        .collect();
    report.lagrange_only = (0..lag.len()).filter(|&j| !lag_used[j]).collect();
    report
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodTiming {
    pub median_ms: f64,
    pub total_iterations: usize,
    pub starts: usize,
    pub roots: usize,
    pub unknowns: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub repetitions: usize,
    pub determinant: MethodTiming,
    pub lagrange: MethodTiming,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Time both pipelines end to end (symbolic build plus multistart solve).
pub fn benchmark_methods(
    p: &Problem,
    cfg: &SolverConfig,
    repetitions: usize,
) -> Result<BenchmarkReport, AnalysisError> {
    let reps = repetitions.max(1);
    let n = p.nvars();
    let mut det_times = Vec::with_capacity(reps);
    let mut lag_times = Vec::with_capacity(reps);
    let mut det = None;
    let mut lag = None;
    for _ in 0..reps {
        let t0 = Instant::now();
        let system = stationary_system(p)?;
        let mut diagnostics: Vec<Diagnostic> = dependent_constraints(p, cfg).into_iter().collect();
        let (roots, stats) = if system[0].is_zero() {
            diagnostics.push(Diagnostic::new(
                "determinant_identically_zero",
                "Det J vanishes everywhere",
            ));
            (Vec::new(), Default::default())
        } else {
            multistart_solve_with_stats(&system, cfg)?
        };
        det_times.push(t0.elapsed().as_secs_f64() * 1e3);
        det = Some(MethodTiming {
            median_ms: 0.0,
            total_iterations: stats.total_iterations,
            starts: stats.starts,
            roots: roots.len(),
            unknowns: n,
            diagnostics,
        });

        let t0 = Instant::now();
        let out = solve_lagrange(p, cfg, DEFAULT_MULTIPLIER_BOX)?;
        lag_times.push(t0.elapsed().as_secs_f64() * 1e3);
        lag = Some(MethodTiming {
            median_ms: 0.0,
            total_iterations: out.total_iterations,
            starts: out.starts,
            roots: out.points.len(),
            unknowns: 2 * n - 1,
            diagnostics: out.diagnostics,
        });
    }
    let (Some(mut determinant), Some(mut lagrange)) = (det, lag) else {
        unreachable!("at least one repetition runs");
    };
    determinant.median_ms = median(det_times);
    lagrange.median_ms = median(lag_times);
    Ok(BenchmarkReport {
        repetitions: reps,
        determinant,
        lagrange,
    })
}
