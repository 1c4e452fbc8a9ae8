//! Damped Newton iteration with multistart and root deduplication.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};
use crate::matrix::{ExprMatrix, MatrixError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Search box, one `(lo, hi)` per variable.
    pub bounds: Vec<(f64, f64)>,
    pub grid_per_axis: usize,
    pub random_starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    pub dedupe_tol: f64,
    pub backtrack: f64,
    pub min_step: f64,
}

impl SolverConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> SolverConfig {
        SolverConfig {
            bounds,
            grid_per_axis: 7,
            random_starts: 50,
            seed: 0,
            max_iter: 100,
            residual_tol: 1e-10,
            step_tol: 1e-12,
            dedupe_tol: 1e-6,
            backtrack: 0.5,
            min_step: 1e-6,
        }
    }

    pub fn uniform(nvars: usize, lo: f64, hi: f64) -> SolverConfig {
        SolverConfig::new(vec![(lo, hi); nvars])
    }

    // Negated comparisons so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::Config(what.to_string()));
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return bad("every box interval needs finite lo < hi");
        }
        if self.grid_per_axis == 0 || self.max_iter == 0 {
            return bad("grid-per-axis and max-iter must be at least 1");
        }
        let tols = [self.residual_tol, self.step_tol, self.dedupe_tol, self.min_step];
        if tols.iter().any(|&t| !(t > 0.0)) {
            return bad("tolerances must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        Ok(())
    }

    pub(crate) fn inflated_contains(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.bounds).all(|(&x, &(lo, hi))| {
            let pad = 0.01 * (hi - lo);
            x >= lo - pad && x <= hi + pad
        })
    }

    fn far_outside(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.bounds).any(|(&x, &(lo, hi))| {
            let c = 0.5 * (lo + hi);
            (x - c).abs() > 5.0 * (hi - lo) || !x.is_finite()
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("system has {equations} equations but {unknowns} unknowns")]
    NotSquare { equations: usize, unknowns: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum NewtonFailure {
    SingularJacobian { iteration: usize },
    MaxIterations,
    Diverged,
    Stalled,
    Domain(EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Root {
    pub point: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub start_index: usize,
}

/// A square system with its Jacobian, compiled for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    n: usize,
    tape: Tape,
}

impl CompiledSystem {
    /// Differentiates `system` symbolically to obtain the Jacobian.
    pub fn new(system: &[Expr]) -> CompiledSystem {
        let n = system.len();
        let entries: Vec<Expr> = system
            .iter()
            .flat_map(|e| (0..n).map(move |j| e.differentiate(j)))
            .collect();
        CompiledSystem::from_parts(system, &entries)
    }

    pub fn with_jacobian(system: &[Expr], jac: &ExprMatrix) -> Result<CompiledSystem, SolverError> {
        let n = system.len();
        if jac.rows() != n || jac.cols() != n {
            return Err(SolverError::NotSquare {
                equations: jac.rows(),
                unknowns: jac.cols(),
            });
        }
        Ok(CompiledSystem::from_parts(system, jac.entries()))
    }

    fn from_parts(system: &[Expr], jac: &[Expr]) -> CompiledSystem {
        let all: Vec<Expr> = system.iter().chain(jac).cloned().collect();
        CompiledSystem {
            n: system.len(),
            tape: Tape::new(&all),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Residuals followed by the row-major Jacobian.
    pub fn eval(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<(), EvalError> {
        self.tape.eval_into(x, scratch, out)
    }

    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n + self.n * self.n];
        self.eval(x, &mut out, &mut Vec::new())?;
        out.truncate(self.n);
        Ok(out)
    }
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve `a x = b` (row-major `a`) with partial pivoting; `None` when a pivot
/// is negligible against the matrix scale.
pub(crate) fn solve_linear(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let scale = max_norm(a);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let lu = DMatrix::from_row_slice(n, n, a).lu();
    let floor = scale * f64::EPSILON * n as f64;
    if lu.u().diagonal().iter().any(|p| p.abs() <= floor) {
        return None;
    }
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
}

/// Options shared by every Newton driver in the crate.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions<'a> {
    pub max_iter: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub bounds: Option<&'a SolverConfig>,
}

impl<'a> NewtonOptions<'a> {
    pub fn from_config(cfg: &'a SolverConfig) -> NewtonOptions<'a> {
        NewtonOptions {
            max_iter: cfg.max_iter,
            residual_tol: cfg.residual_tol,
            step_tol: cfg.step_tol,
            backtrack: cfg.backtrack,
            min_step: cfg.min_step,
            bounds: Some(cfg),
        }
    }
}

const MAX_POLISH: usize = 60;
/// Consecutive iterations allowed to end at the minimum step multiplier
/// before the start is abandoned as stalled.
const MAX_TINY_STEPS: usize = 5;

/// Damped Newton on `eval`, which fills residuals (`n`) then the Jacobian
/// (`n * n`, row-major). Returns the converged point, its residual max-norm
/// and the iteration count.
pub(crate) fn newton_core<F>(
    eval: F,
    n: usize,
    x0: &[f64],
    opts: NewtonOptions<'_>,
) -> Result<(Vec<f64>, f64, usize), NewtonFailure>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), EvalError>,
{
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; n + n * n];
    let mut trial_buf = buf.clone();
    eval(&x, &mut buf).map_err(NewtonFailure::Domain)?;
    let mut r = max_norm(&buf[..n]);
    let mut iter = 0;
    let mut tiny_steps = 0;
    while r > opts.residual_tol {
        if iter == opts.max_iter {
            return Err(NewtonFailure::MaxIterations);
        }
        iter += 1;
        let rhs: Vec<f64> = buf[..n].iter().map(|v| -v).collect();
        let delta = solve_linear(n, &buf[n..], &rhs)
            .ok_or(NewtonFailure::SingularJacobian { iteration: iter })?;
        let mut t = 1.0;
        let mut trial = vec![0.0; n];
        loop {
            for i in 0..n {
                trial[i] = x[i] + t * delta[i];
            }
            let ok = eval(&trial, &mut trial_buf).is_ok();
            let r_new = if ok { max_norm(&trial_buf[..n]) } else { f64::INFINITY };
            if r_new < r {
                r = r_new;
                break;
            }
            t *= opts.backtrack;
            if t < opts.min_step {
                if !ok {
                    return Err(NewtonFailure::Domain(
                        eval(&trial, &mut trial_buf).unwrap_err(),
                    ));
                }
                // Take the tiny step anyway; Newton may still escape.
                tiny_steps += 1;
                if tiny_steps > MAX_TINY_STEPS {
                    return Err(NewtonFailure::Stalled);
                }
                r = r_new;
                break;
            }
        }
        if t >= opts.min_step {
            tiny_steps = 0;
        }
        let moved = t * max_norm(&delta);
        std::mem::swap(&mut buf, &mut trial_buf);
        std::mem::swap(&mut x, &mut trial);
        if opts.bounds.is_some_and(|c| c.far_outside(&x)) {
            return Err(NewtonFailure::Diverged);
        }
        if r > opts.residual_tol && moved <= opts.step_tol * (1.0 + max_norm(&x)) {
            return Err(NewtonFailure::Stalled);
        }
    }
    // Polish towards machine precision while the residual keeps falling.
    // Simple roots settle in a step or two; at multiple roots Newton is only
    // linear and needs more steps to pin the location down.
    for _ in 0..MAX_POLISH {
        if r == 0.0 {
            break;
        }
        let rhs: Vec<f64> = buf[..n].iter().map(|v| -v).collect();
        let Some(delta) = solve_linear(n, &buf[n..], &rhs) else {
            break;
        };
        let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
        if eval(&trial, &mut trial_buf).is_err() {
            break;
        }
        let r_new = max_norm(&trial_buf[..n]);
        if r_new >= r {
            break;
        }
        r = r_new;
        x = trial;
        std::mem::swap(&mut buf, &mut trial_buf);
    }
    Ok((x, r, iter))
}

/// Newton from a single start on `system` with its symbolic Jacobian `jac`.
pub fn newton_solve(
    system: &[Expr],
    jac: &ExprMatrix,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Result<Root, NewtonFailure>, SolverError> {
    let sys = CompiledSystem::with_jacobian(system, jac)?;
    Ok(newton_compiled(&sys, x0, cfg, 0))
}

pub(crate) fn newton_compiled(
    sys: &CompiledSystem,
    x0: &[f64],
    cfg: &SolverConfig,
    start_index: usize,
) -> Result<Root, NewtonFailure> {
    let eval = |x: &[f64], out: &mut [f64]| sys.eval(x, out, &mut Vec::new());
    newton_core(eval, sys.n, x0, NewtonOptions::from_config(cfg)).map(|(point, residual_norm, iterations)| {
        Root {
            point,
            residual_norm,
            iterations,
            start_index,
        }
    })
}

/// Cell-centred grid points followed by seeded uniform random points.
pub fn start_points(cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let n = cfg.bounds.len();
    let k = cfg.grid_per_axis;
    let total = k.checked_pow(n as u32).unwrap_or(usize::MAX);
    let mut starts = Vec::with_capacity(total.saturating_add(cfg.random_starts).min(1 << 20));
    for mut idx in 0..total {
        let mut p = Vec::with_capacity(n);
        for &(lo, hi) in &cfg.bounds {
            let i = idx % k;
            idx /= k;
            p.push(lo + (i as f64 + 0.5) * (hi - lo) / k as f64);
        }
        starts.push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        starts.push(cfg.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect());
    }
    starts
}

/// Statistics of one multistart run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub starts: usize,
    pub converged: usize,
    pub total_iterations: usize,
}

/// Run Newton from every start in parallel and return the deduplicated
/// in-box roots, sorted.
pub fn solve_from_starts(
    sys: &CompiledSystem,
    starts: &[Vec<f64>],
    cfg: &SolverConfig,
) -> (Vec<Root>, SolveStats) {
    let (roots, stats) = converge_all(sys, starts, cfg, |p| cfg.inflated_contains(p));
    (dedupe(roots, cfg.dedupe_tol), stats)
}

/// Converged roots accepted by `keep`, not yet deduplicated.
pub(crate) fn converge_all(
    sys: &CompiledSystem,
    starts: &[Vec<f64>],
    cfg: &SolverConfig,
    keep: impl Fn(&[f64]) -> bool,
) -> (Vec<Root>, SolveStats) {
    let outcomes: Vec<Result<Root, NewtonFailure>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| newton_compiled(sys, x0, cfg, i))
        .collect();
    let mut stats = SolveStats {
        starts: starts.len(),
        ..SolveStats::default()
    };
    let mut roots = Vec::new();
    for root in outcomes.into_iter().flatten() {
        stats.converged += 1;
        stats.total_iterations += root.iterations;
        if keep(&root.point) {
            roots.push(root);
        }
    }
    (roots, stats)
}

/// All roots found from the grid and random starts of `cfg`.
pub fn multistart_solve(system: &[Expr], cfg: &SolverConfig) -> Result<Vec<Root>, SolverError> {
    multistart_solve_with_stats(system, cfg).map(|(r, _)| r)
}

pub fn multistart_solve_with_stats(
    system: &[Expr],
    cfg: &SolverConfig,
) -> Result<(Vec<Root>, SolveStats), SolverError> {
    cfg.validate()?;
    if cfg.bounds.len() != system.len() {
        return Err(SolverError::NotSquare {
            equations: system.len(),
            unknowns: cfg.bounds.len(),
        });
    }
    let sys = CompiledSystem::new(system);
    Ok(solve_from_starts(&sys, &start_points(cfg), cfg))
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

/// Greedy max-norm clustering keeping the lowest-residual member of each
/// cluster; output sorted lexicographically by coordinates.
pub fn dedupe(mut roots: Vec<Root>, tol: f64) -> Vec<Root> {
    roots.sort_by(|a, b| {
        a.residual_norm
            .total_cmp(&b.residual_norm)
            .then(a.start_index.cmp(&b.start_index))
            .then_with(|| lex_cmp(&a.point, &b.point))
    });
    let mut kept: Vec<Root> = Vec::new();
    for r in roots {
        let dup = kept.iter().any(|k| {
            k.point
                .iter()
                .zip(&r.point)
                .all(|(a, b)| (a - b).abs() <= tol)
        });
        if !dup {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| lex_cmp(&a.point, &b.point));
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn system(texts: &[&str], names: &[&str]) -> Vec<Expr> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        texts.iter().map(|t| parse(t, &names).unwrap()).collect()
    }

    fn jac(sys: &[Expr]) -> ExprMatrix {
        let n = sys.len();
        let e = sys
            .iter()
            .flat_map(|s| (0..n).map(move |j| s.differentiate(j)))
            .collect();
        ExprMatrix::new(n, n, e).unwrap()
    }

    #[test]
    fn quadratic_from_two() {
        let s = system(&["x^2 - 1"], &["x"]);
        let cfg = SolverConfig::uniform(1, -3.0, 3.0);
        let root = newton_solve(&s, &jac(&s), &[2.0], &cfg).unwrap().unwrap();
        assert!((root.point[0] - 1.0).abs() < 1e-15);
        assert!(root.residual_norm <= 1e-10);
    }

    #[test]
    fn parabola_stationarity_from_offset_start() {
        let s = system(&["-4*x*y - 4*y", "x - y^2 - 1"], &["x", "y"]);
        let cfg = SolverConfig::uniform(2, -3.0, 3.0);
        let root = newton_solve(&s, &jac(&s), &[2.0, 0.5], &cfg).unwrap().unwrap();
        assert!((root.point[0] - 1.0).abs() < 1e-12 && root.point[1].abs() < 1e-12);
    }

    #[test]
    fn linear_system_in_one_step() {
        let s = system(&["x + y - 2", "x - y"], &["x", "y"]);
        let cfg = SolverConfig::uniform(2, -3.0, 3.0);
        for x0 in [[0.0, 0.0], [-2.5, 2.9], [100.0, -7.0]] {
            let root = newton_solve(&s, &jac(&s), &x0, &cfg).unwrap().unwrap();
            assert_eq!(root.iterations, 1);
            assert!((root.point[0] - 1.0).abs() < 1e-14 && (root.point[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn no_real_root_gives_empty_set() {
        let s = system(&["x^2 + 1"], &["x"]);
        let roots = multistart_solve(&s, &SolverConfig::uniform(1, -3.0, 3.0)).unwrap();
        assert!(roots.is_empty());
    }

    #[test]
    fn finds_all_roots_of_a_cubic() {
        let s = system(&["x^3 - x"], &["x"]);
        let roots = multistart_solve(&s, &SolverConfig::uniform(1, -3.0, 3.0)).unwrap();
        let xs: Vec<f64> = roots.iter().map(|r| r.point[0]).collect();
        assert_eq!(xs.len(), 3);
        for (got, want) in xs.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dedupe_keeps_lowest_residual() {
        let r = |p: [f64; 2], res: f64, i: usize| Root {
            point: p.to_vec(),
            residual_norm: res,
            iterations: 1,
            start_index: i,
        };
        let out = dedupe(vec![r([1.0, 0.0], 1e-12, 0), r([1.0 + 1e-9, -1e-9], 1e-14, 1)], 1e-6);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].start_index, 1);
        assert!(dedupe(Vec::new(), 1e-6).is_empty());
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let s = system(&["x^2"], &["x"]);
        let cfg = SolverConfig::uniform(1, -3.0, 3.0);
        let out = newton_solve(&s, &jac(&s), &[0.0], &cfg).unwrap();
        assert!(out.is_ok(), "zero residual at the start needs no step");
        let s = system(&["x^2 + 1"], &["x"]);
        let out = newton_solve(&s, &jac(&s), &[0.0], &cfg).unwrap();
        assert_eq!(out, Err(NewtonFailure::SingularJacobian { iteration: 1 }));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SolverConfig::uniform(1, 1.0, -1.0);
        assert!(cfg.validate().is_err());
        cfg = SolverConfig::uniform(1, -1.0, 1.0);
        cfg.residual_tol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
