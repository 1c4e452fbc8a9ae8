//! Derivatives of the objective restricted to the constraint curve.
//!
//! With `x_k` as the curve parameter, one derivative step replaces an
//! expression `e` by `sum_i de/dx_i * s_{i,k}`. Iterating from `f` gives
//! `f'_k, f''_k, ...`. When `f` and the constraints are rational the work is
//! done exactly in [`RatFn`], so factors of `Det S_k` that divide the
//! numerator cancel; otherwise plain expression quotients are built.

use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};
use crate::matrix::{
    adjugate, cofactor_det, constraint_jacobian, infinitesimal_coeffs, InfinitesimalCoeffs,
    MatrixError, MAX_SYMBOLIC_SIDE,
};
use crate::problem::Problem;
use crate::rational::RatFn;
use crate::trace::{default_step, TraceError, Tracer};

/// Node limit for a single curve derivative.
pub const MAX_DERIVATIVE_NODES: usize = 1_000_000;
/// Beyond this many stored terms the exact path gives way to plain quotients.
const MAX_RATIONAL_TERMS: usize = 20_000;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TaylorError {
    #[error("axis {axis} out of range for {nvars} variables")]
    InvalidAxis { axis: usize, nvars: usize },
    #[error("center is off the constraint curve (residual {residual:e})")]
    NotOnCurve { residual: f64 },
    #[error("center has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("derivative of order {order} along axis {axis} has {nodes} nodes (limit {MAX_DERIVATIVE_NODES}); use the numeric oracle instead")]
    SizeGuard { axis: usize, order: usize, nodes: usize },
    #[error("derivative of order {order} is singular at the center and extrapolation along the curve did not settle")]
    SingularUnrecoverable { order: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Taylor polynomial of `f` along the curve, in powers of `x_k - center_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorSeries {
    pub axis: usize,
    pub center: Vec<f64>,
    pub order: usize,
    pub coefficients: Vec<f64>,
    /// `Det S_k` vanishes (numerically) at the center.
    pub singular_parametrization: bool,
    /// Orders whose value came from extrapolation rather than evaluation.
    pub extrapolated_orders: Vec<usize>,
}

impl TaylorSeries {
    pub fn evaluate(&self, xk: f64) -> f64 {
        let t = xk - self.center[self.axis];
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// `sum_i de/dx_i * s_{i,k}` with the `i = k` term included.
pub fn directional_derivative(e: &Expr, coeffs: &InfinitesimalCoeffs) -> Expr {
    let n = coeffs.nvars();
    let rational = || {
        let num: Vec<RatFn> = coeffs
            .numerators
            .iter()
            .map(|x| RatFn::from_expr(x, n))
            .collect::<Option<_>>()?;
        let den = RatFn::from_expr(&coeffs.denominator, n)?;
        let r = RatFn::from_expr(e, n)?;
        Some(rational_step(&r, &num, &den)?.to_expr())
    };
    rational().unwrap_or_else(|| expr_step(e, &coeffs.numerators, &coeffs.denominator))
}

fn rational_step(e: &RatFn, num: &[RatFn], den: &RatFn) -> Option<RatFn> {
    let mut acc = RatFn::from_poly(crate::rational::Poly::zero(e.nvars()));
    for (i, s) in num.iter().enumerate() {
        if s.is_zero() {
            continue;
        }
        acc = acc.add(&e.derivative(i).mul(s));
    }
    acc.div(den)
}

fn expr_step(e: &Expr, num: &[Expr], den: &Expr) -> Expr {
    let mut acc = Expr::zero();
    for (i, s) in num.iter().enumerate() {
        if s.is_zero() {
            continue;
        }
        let d = e.differentiate(i);
        if d.is_zero() {
            continue;
        }
        acc = if acc.is_zero() { d * s } else { acc + d * s };
    }
    (acc / den).simplify()
}

/// `m`-th derivative of the objective along axis `k` as an expression.
pub fn curve_derivative(p: &Problem, k: usize, order: usize) -> Result<Expr, TaylorError> {
    if order == 0 {
        return Err(TaylorError::ZeroOrder);
    }
    CurveCalculus::new(p)?.derivative(k, order)
}

/// Taylor series of `f` along axis `k` about `center`, up to `order`.
pub fn taylor_series(
    p: &Problem,
    k: usize,
    center: &[f64],
    order: usize,
) -> Result<TaylorSeries, TaylorError> {
    CurveCalculus::new(p)?.taylor(k, center, order)
}

struct Derivative {
    expr: Expr,
    rational: Option<RatFn>,
    tape: Tape,
}

struct Axis {
    coeffs: InfinitesimalCoeffs,
    rational: Option<(Vec<RatFn>, RatFn)>,
    det_tape: Tape,
    /// Entry `m - 1` holds `f^(m)`.
    derivatives: Mutex<Vec<Derivative>>,
}

/// Per-problem cache of infinitesimal coefficients and curve derivatives.
/// Derivatives are built lazily on first request and shared across threads.
pub struct CurveCalculus {
    nvars: usize,
    f: Expr,
    f_rational: Option<RatFn>,
    constraints: Tape,
    jg_scale: Tape,
    axes: Vec<Axis>,
    tracer: Tracer,
    bounds: Vec<(f64, f64)>,
}

impl CurveCalculus {
    pub fn new(p: &Problem) -> Result<CurveCalculus, TaylorError> {
        let n = p.nvars();
        let g = p.constraint_functions();
        let jg = constraint_jacobian(&g)?;
        if n - 1 > MAX_SYMBOLIC_SIDE {
            return Err(MatrixError::TooLarge { side: n - 1 }.into());
        }
        let g_rat: Option<Vec<RatFn>> = g.iter().map(|e| RatFn::from_expr(e, n)).collect();
        let f_rational = g_rat.as_ref().and_then(|_| RatFn::from_expr(p.objective(), n));
        let jg_rat: Option<Vec<RatFn>> = g_rat.as_ref().map(|gs| {
            gs.iter()
                .flat_map(|gr| (0..n).map(move |j| gr.derivative(j)))
                .collect()
        });
        let mut axes = Vec::with_capacity(n);
        for k in 0..n {
            let coeffs = infinitesimal_coeffs(&jg, k)?;
            let rational = jg_rat.as_ref().map(|j| rational_coeffs(j, n, k));
            axes.push(Axis {
                det_tape: Tape::new(std::slice::from_ref(&coeffs.denominator)),
                coeffs,
                rational,
                derivatives: Mutex::new(Vec::new()),
            });
        }
        Ok(CurveCalculus {
            nvars: n,
            f: p.objective().clone(),
            f_rational,
            constraints: Tape::new(&p.constraint_residuals()),
            jg_scale: Tape::new(jg.entries()),
            axes,
            tracer: Tracer::new(p),
            bounds: p.bounds(),
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Whether the exact rational path is in use.
    pub fn is_rational(&self) -> bool {
        self.f_rational.is_some()
    }

    pub fn coeffs(&self, k: usize) -> &InfinitesimalCoeffs {
        &self.axes[k].coeffs
    }

    pub fn tracer(&self) -> &Tracer {
        &self.tracer
    }

    fn check_axis(&self, k: usize) -> Result<(), TaylorError> {
        if k >= self.nvars {
            return Err(TaylorError::InvalidAxis {
                axis: k,
                nvars: self.nvars,
            });
        }
        Ok(())
    }

    /// `Det S_k` at `x`.
    pub fn det_s(&self, k: usize, x: &[f64]) -> Result<f64, EvalError> {
        self.axes[k].det_tape.eval_one(x)
    }

    /// Threshold below which `|Det S_k|` counts as singular at `x`:
    /// `1e-8` times the largest constraint-gradient entry raised to the
    /// determinant's degree `N - 1`.
    pub fn singular_tol(&self, x: &[f64]) -> f64 {
        let scale = self
            .jg_scale
            .eval(x)
            .map(|v| v.iter().fold(0.0f64, |m, a| m.max(a.abs())))
            .unwrap_or(1.0);
        1e-8 * scale.powi(self.nvars as i32 - 1)
    }

    pub fn constraint_residual(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(crate::solver::max_norm(&self.constraints.eval(x)?))
    }

    /// Symbolic `f^(order)` along axis `k`.
    pub fn derivative(&self, k: usize, order: usize) -> Result<Expr, TaylorError> {
        self.with_derivative(k, order, |d| d.expr.clone())
    }

    /// Numeric `f^(order)` along axis `k` at `x`.
    pub fn derivative_value(&self, k: usize, order: usize, x: &[f64]) -> Result<f64, TaylorError> {
        let tape = self.with_derivative(k, order, |d| d.tape.clone())?;
        Ok(tape.eval_one(x)?)
    }

    fn with_derivative<T>(
        &self,
        k: usize,
        order: usize,
        read: impl FnOnce(&Derivative) -> T,
    ) -> Result<T, TaylorError> {
        self.check_axis(k)?;
        if order == 0 {
            return Err(TaylorError::ZeroOrder);
        }
        let axis = &self.axes[k];
        let mut cache = axis.derivatives.lock().unwrap_or_else(|e| e.into_inner());
        while cache.len() < order {
            let m = cache.len() + 1;
            let (prev_expr, prev_rat) = match cache.last() {
                Some(d) => (d.expr.clone(), d.rational.clone()),
                None => (self.f.clone(), self.f_rational.clone()),
            };
            let rational = match (&prev_rat, &axis.rational) {
                (Some(e), Some((num, den))) if e.term_count() <= MAX_RATIONAL_TERMS => {
                    rational_step(e, num, den).filter(|r| r.term_count() <= MAX_RATIONAL_TERMS)
                }
                _ => None,
            };
            let expr = match &rational {
                Some(r) => r.to_expr(),
                None => expr_step(&prev_expr, &axis.coeffs.numerators, &axis.coeffs.denominator),
            };
            let nodes = expr.node_count();
            if nodes > MAX_DERIVATIVE_NODES {
                return Err(TaylorError::SizeGuard {
                    axis: k,
                    order: m,
                    nodes,
                });
            }
            cache.push(Derivative {
                tape: Tape::new(std::slice::from_ref(&expr)),
                expr,
                rational,
            });
        }
        Ok(read(&cache[order - 1]))
    }

    fn check_center(&self, center: &[f64]) -> Result<(), TaylorError> {
        if center.len() != self.nvars {
            return Err(TaylorError::Dimension {
                expected: self.nvars,
                got: center.len(),
            });
        }
        let residual = self.constraint_residual(center)?;
        let scale = 1.0 + crate::solver::max_norm(center);
        if residual > 1e-9 * scale {
            return Err(TaylorError::NotOnCurve { residual });
        }
        Ok(())
    }

    /// Taylor coefficients `c_m = f^(m)_k(center) / m!`.
    pub fn taylor(&self, k: usize, center: &[f64], order: usize) -> Result<TaylorSeries, TaylorError> {
        self.check_axis(k)?;
        self.check_center(center)?;
        let mut coefficients = vec![self.tracer.objective(center)?];
        let mut extrapolated_orders = Vec::new();
        let mut factorial = 1.0;
        for m in 1..=order {
            factorial *= m as f64;
            let value = match self.derivative_value(k, m, center) {
                Ok(v) => v,
                Err(TaylorError::Eval(_)) => {
                    extrapolated_orders.push(m);
                    self.extrapolate(k, m, center)?
                }
                Err(e) => return Err(e),
            };
            coefficients.push(value / factorial);
        }
        let det = self.det_s(k, center).unwrap_or(0.0);
        Ok(TaylorSeries {
            axis: k,
            center: center.to_vec(),
            order,
            coefficients,
            singular_parametrization: det.abs() <= self.singular_tol(center),
            extrapolated_orders,
        })
    }

    /// Limit of `f^(m)_k` at `center` from nearby curve points reached by
    /// tracing along a well-conditioned axis. Each side is extrapolated
    /// separately and the two limits must agree.
    fn extrapolate(&self, k: usize, m: usize, center: &[f64]) -> Result<f64, TaylorError> {
        let tol = self.singular_tol(center);
        let mut candidates: Vec<(usize, f64)> = (0..self.nvars)
            .filter(|&j| j != k)
            .filter_map(|j| Some((j, self.det_s(j, center).ok()?.abs())))
            .filter(|&(_, d)| d > tol)
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (j, _) in candidates {
            let (lo, hi) = self.bounds[j];
            let h = default_step(hi - lo);
            let side = |sign: f64| -> Option<f64> {
                let offsets: Vec<f64> = (0..5).map(|l| sign * h * f64::powi(2.0, l)).collect();
                let stations: Vec<f64> = std::iter::once(center[j])
                    .chain(offsets.iter().map(|o| center[j] + o))
                    .collect();
                let sample = if sign > 0.0 {
                    self.tracer.trace_stations(j, center, &stations).ok()?
                } else {
                    let mut st = stations.clone();
                    st.reverse();
                    let mut s = self.tracer.trace_stations(j, center, &st).ok()?;
                    s.points.reverse();
                    s
                };
                if sample.points.len() != stations.len() {
                    return None;
                }
                let vals: Vec<f64> = sample.points[1..]
                    .iter()
                    .map(|p| self.derivative_value(k, m, p).ok())
                    .collect::<Option<_>>()?;
                Some(neville_at_zero(&offsets, &vals))
            };
            let (Some(a), Some(b)) = (side(1.0), side(-1.0)) else {
                continue;
            };
            if a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())) {
                return Ok(0.5 * (a + b));
            }
        }
        Err(TaylorError::SingularUnrecoverable { order: m })
    }
}

/// Value at 0 of the polynomial interpolating `(t_i, v_i)`.
fn neville_at_zero(t: &[f64], v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (ti, tj) = (t[i], t[i + level]);
            p[i] = (tj * p[i] - ti * p[i + 1]) / (tj - ti);
        }
    }
    p[0]
}

/// Exact `s_{i,k}` numerators and the denominator `Det S_k` from the
/// rational constraint Jacobian (row-major, `(N-1) x N`).
fn rational_coeffs(jg: &[RatFn], n: usize, k: usize) -> (Vec<RatFn>, RatFn) {
    let m = n - 1;
    let s: Vec<RatFn> = (0..m)
        .flat_map(|r| (0..n).filter(move |&j| j != k).map(move |j| jg[r * n + j].clone()))
        .collect();
    let idx: Vec<usize> = (0..m).collect();
    let den = cofactor_det(&s, m, &idx, &idx).widen_to(n);
    let adj = adjugate(&s, m);
    let mut num = vec![RatFn::from_poly(crate::rational::Poly::zero(n)); n];
    for (pos, var) in (0..n).filter(|&j| j != k).enumerate() {
        let mut acc = RatFn::from_poly(crate::rational::Poly::zero(n));
        for l in 0..m {
            acc = acc.add(&adj[pos * m + l].mul(&jg[l * n + k]));
        }
        num[var] = acc.neg();
    }
    num[k] = den.clone();
    (num, den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parabola() -> Problem {
        Problem::parse(&["x", "y"], "x^2 + 2*y^2", &[("x - y^2", 1.0)]).unwrap()
    }

    fn space_curve() -> Problem {
        Problem::parse(
            &["x", "y", "z"],
            "x^2 - 2*y + z^3",
            &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
        )
        .unwrap()
    }

    #[test]
    fn parabola_first_derivative_along_x() {
        let d = curve_derivative(&parabola(), 0, 1).unwrap();
        for (x, y) in [(1.0, 0.0), (2.0, 1.0), (5.0, -2.0)] {
            assert!((d.evaluate(&[x, y]).unwrap() - 2.0 * (x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn removable_singularity_cancels() {
        let calc = CurveCalculus::new(&space_curve()).unwrap();
        assert!(calc.is_rational());
        let d2 = calc.derivative(2, 2).unwrap();
        // At A = (0, 3, -2) Det S_z = 2x vanishes, yet f''_z = 6(z - 1).
        assert_eq!(d2.evaluate(&[0.0, 3.0, -2.0]).unwrap(), -18.0);
        let d3 = calc.derivative(2, 3).unwrap();
        assert_eq!(d3.as_const(), Some(6.0));
    }

    #[test]
    fn constant_has_zero_directional_derivative() {
        let p = parabola();
        let jg = constraint_jacobian(&p.constraint_functions()).unwrap();
        let c = infinitesimal_coeffs(&jg, 0).unwrap();
        assert!(directional_derivative(&Expr::constant(4.0), &c).is_zero());
    }

    #[test]
    fn series_about_fold() {
        let s = taylor_series(&parabola(), 0, &[1.0, 0.0], 3).unwrap();
        assert_eq!(s.coefficients, vec![1.0, 4.0, 1.0, 0.0]);
        assert!(s.singular_parametrization);
    }

    #[test]
    fn genuine_singularity_is_unrecoverable() {
        let p = Problem::parse(&["x", "y"], "y", &[("x^2 + y^2", 1.0)]).unwrap();
        let err = taylor_series(&p, 0, &[1.0, 0.0], 1).unwrap_err();
        assert_eq!(err, TaylorError::SingularUnrecoverable { order: 1 });
    }

    #[test]
    fn non_rational_problem_uses_quotients() {
        let p = Problem::parse(&["x", "y"], "exp(x) + y", &[("sin(x) + y", 0.5)]).unwrap();
        let calc = CurveCalculus::new(&p).unwrap();
        assert!(!calc.is_rational());
        // y = 0.5 - sin(x), so f~(x) = exp(x) + 0.5 - sin(x).
        let x = 0.3;
        let pt = [x, 0.5 - f64::sin(x)];
        let d1 = calc.derivative_value(0, 1, &pt).unwrap();
        let d2 = calc.derivative_value(0, 2, &pt).unwrap();
        assert!((d1 - (x.exp() - x.cos())).abs() < 1e-12);
        assert!((d2 - (x.exp() + x.sin())).abs() < 1e-12);
    }

    #[test]
    fn off_curve_center_is_rejected() {
        assert!(matches!(
            taylor_series(&parabola(), 0, &[0.0, 0.0], 2),
            Err(TaylorError::NotOnCurve { .. })
        ));
    }
}
