//! Numeric tracing of the constraint curve and finite-difference derivatives
//! of the objective along it. Serves as an independent oracle for the
//! symbolic curve derivatives and as the source of plot data.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Tape};
use crate::problem::Problem;
use crate::solver::{max_norm, newton_core, NewtonOptions};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("start point is off the constraint curve (residual {residual:e})")]
    NotOnCurve { residual: f64 },
    #[error("axis {axis} out of range for {nvars} variables")]
    InvalidAxis { axis: usize, nvars: usize },
    #[error("start point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("step must be finite and nonzero")]
    InvalidStep,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Points of the constraint curve at stations of the parameter `x_axis`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSample {
    pub axis: usize,
    pub params: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub f_values: Vec<f64>,
    /// Index of the start point within the sample.
    pub center_index: usize,
    /// Whether marching stopped early below / above the start.
    pub truncated: (bool, bool),
}

/// Default marching step for an axis of the given box width.
pub fn default_step(width: f64) -> f64 {
    (width / 1000.0).clamp(1e-6, 1e-2)
}

/// Constraint residuals and Jacobian, compiled once per problem.
pub struct Tracer {
    n: usize,
    f: Tape,
    /// `N-1` residuals followed by the `(N-1) x N` Jacobian.
    g: Tape,
}

const CORRECTOR_TOL: f64 = 1e-11;

impl Tracer {
    pub fn new(p: &Problem) -> Tracer {
        let n = p.nvars();
        let res = p.constraint_residuals();
        let mut all = res.clone();
        for r in &res {
            all.extend((0..n).map(|j| r.differentiate(j)));
        }
        Tracer {
            n,
            f: Tape::new(std::slice::from_ref(p.objective())),
            g: Tape::new(&all),
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.f.eval_one(x)
    }

    pub fn constraint_residual(&self, x: &[f64]) -> Result<f64, EvalError> {
        let out = self.g.eval(x)?;
        Ok(max_norm(&out[..self.n - 1]))
    }

    /// Residuals and the Jacobian with column `k` removed, at the full point
    /// obtained by inserting `xk` into `y`.
    fn reduced(&self, k: usize, xk: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let m = self.n - 1;
        let full = insert(y, k, xk);
        let vals = self.g.eval(&full)?;
        out[..m].copy_from_slice(&vals[..m]);
        for r in 0..m {
            let row = &vals[m + r * self.n..m + (r + 1) * self.n];
            for (c, j) in (0..self.n).filter(|&j| j != k).enumerate() {
                out[m + r * m + c] = row[j];
            }
        }
        Ok(())
    }

    /// Fix `x_k = xk` and solve the constraints for the other coordinates
    /// starting from `guess` (full point; its `k` entry is ignored).
    pub fn correct(&self, k: usize, xk: f64, guess: &[f64]) -> Option<Vec<f64>> {
        let y0 = remove(guess, k);
        let opts = NewtonOptions {
            max_iter: 40,
            residual_tol: CORRECTOR_TOL,
            step_tol: 1e-15,
            backtrack: 0.5,
            min_step: 1e-4,
            bounds: None,
        };
        let eval = |y: &[f64], out: &mut [f64]| self.reduced(k, xk, y, out);
        let (y, _, _) = newton_core(eval, self.n - 1, &y0, opts).ok()?;
        Some(insert(&y, k, xk))
    }

    /// Numeric `S_k` at `x`, row-major, and the deleted column.
    fn blocks(&self, k: usize, x: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>), EvalError> {
        let m = self.n - 1;
        let vals = self.g.eval(x)?;
        let mut s = DMatrix::zeros(m, m);
        let mut col = vec![0.0; m];
        for r in 0..m {
            let row = &vals[m + r * self.n..m + (r + 1) * self.n];
            col[r] = row[k];
            for (c, j) in (0..self.n).filter(|&j| j != k).enumerate() {
                s[(r, c)] = row[j];
            }
        }
        Ok((s, col))
    }

    /// Predictor guesses for the first step away from `x`: the tangent when
    /// `S_k` is invertible, otherwise square-root offsets along its null
    /// direction (the curve folds over `x_k` there).
    fn first_guesses(&self, k: usize, x: &[f64], step: f64) -> Vec<Vec<f64>> {
        let Ok((s, col)) = self.blocks(k, x) else {
            return vec![x.to_vec()];
        };
        let svd = s.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let (imin, smin) = svd.singular_values.argmin();
        let mut out = Vec::new();
        if smin > 1e-8 * smax.max(1.0) {
            if let Some(t) = s.lu().solve(&nalgebra::DVector::from_vec(col.iter().map(|c| -c).collect())) {
                let mut g = x.to_vec();
                for (c, j) in (0..self.n).filter(|&j| j != k).enumerate() {
                    g[j] += t[c] * step;
                }
                g[k] += step;
                out.push(g);
            }
        } else if let Some(vt) = &svd.v_t {
            let r = step.abs().sqrt();
            for sign in [1.0, -1.0] {
                let mut g = x.to_vec();
                for (c, j) in (0..self.n).filter(|&j| j != k).enumerate() {
                    g[j] += sign * r * vt[(imin, c)];
                }
                g[k] += step;
                out.push(g);
            }
        }
        out.push({
            let mut g = x.to_vec();
            g[k] += step;
            g
        });
        out
    }

    /// March from `start` in one direction; returns the stations reached.
    fn march(&self, k: usize, start: &[f64], step: f64, count: usize) -> (Vec<Vec<f64>>, bool) {
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(count);
        let mut prev = start.to_vec();
        let mut prev2: Option<Vec<f64>> = None;
        for i in 1..=count {
            let xk = start[k] + step * i as f64;
            let guesses = match &prev2 {
                Some(p2) => vec![prev.iter().zip(p2).map(|(a, b)| 2.0 * a - b).collect()],
                None => self.first_guesses(k, &prev, step),
            };
            let next = guesses.iter().find_map(|g| {
                let c = self.correct(k, xk, g)?;
                let jump = max_norm(&c.iter().zip(&prev).map(|(a, b)| a - b).collect::<Vec<_>>());
                let expected = match &prev2 {
                    Some(p2) => max_norm(&prev.iter().zip(p2).map(|(a, b)| a - b).collect::<Vec<_>>()),
                    None => step.abs().sqrt(),
                };
                // A much larger move than the last one means another branch.
                (jump <= 10.0 * (expected + step.abs())).then_some(c)
            });
            match next {
                Some(p) => {
                    prev2 = Some(std::mem::replace(&mut prev, p.clone()));
                    pts.push(p);
                }
                None => return (pts, true),
            }
        }
        (pts, false)
    }

    /// Trace `count` stations on each side of `start` along axis `k`.
    pub fn trace(&self, k: usize, start: &[f64], step: f64, count: usize) -> Result<CurveSample, TraceError> {
        self.check_start(k, start)?;
        if !(step.is_finite() && step != 0.0) {
            return Err(TraceError::InvalidStep);
        }
        let step = step.abs();
        let start = self.correct(k, start[k], start).unwrap_or_else(|| start.to_vec());
        let (below, trunc_lo) = self.march(k, &start, -step, count);
        let (above, trunc_hi) = self.march(k, &start, step, count);
        let center_index = below.len();
        let points: Vec<Vec<f64>> = below.into_iter().rev().chain(std::iter::once(start)).chain(above).collect();
        self.finish(k, points, center_index, (trunc_lo, trunc_hi))
    }

    /// Trace through the given increasing stations of `x_k`, starting at the
    /// station nearest to `anchor`. Unreached stations are dropped.
    pub fn trace_stations(&self, k: usize, anchor: &[f64], stations: &[f64]) -> Result<CurveSample, TraceError> {
        self.check_start(k, anchor)?;
        let Some(near) = (0..stations.len()).min_by(|&a, &b| {
            (stations[a] - anchor[k]).abs().total_cmp(&(stations[b] - anchor[k]).abs())
        }) else {
            return self.finish(k, Vec::new(), 0, (false, false));
        };
        let first = self
            .first_guesses(k, anchor, stations[near] - anchor[k])
            .iter()
            .find_map(|g| self.correct(k, stations[near], g));
        let Some(first) = first else {
            return self.finish(k, Vec::new(), 0, (true, true));
        };
        let walk = |range: Box<dyn Iterator<Item = usize>>| {
            let mut pts = Vec::new();
            let mut prev = first.clone();
            let mut prev2: Option<Vec<f64>> = None;
            for i in range {
                let xk = stations[i];
                let guess: Vec<f64> = match &prev2 {
                    Some(p2) => {
                        let ratio = (xk - prev[k]) / (prev[k] - p2[k]);
                        prev.iter().zip(p2).map(|(a, b)| a + ratio * (a - b)).collect()
                    }
                    None => self.first_guesses(k, &prev, xk - prev[k]).swap_remove(0),
                };
                match self.correct(k, xk, &guess) {
                    Some(p) => {
                        prev2 = Some(std::mem::replace(&mut prev, p.clone()));
                        pts.push(p);
                    }
                    None => return (pts, true),
                }
            }
            (pts, false)
        };
        let (below, lo) = walk(Box::new((0..near).rev()));
        let (above, hi) = walk(Box::new(near + 1..stations.len()));
        let center_index = below.len();
        let points = below.into_iter().rev().chain(std::iter::once(first)).chain(above).collect();
        self.finish(k, points, center_index, (lo, hi))
    }

    fn check_start(&self, k: usize, start: &[f64]) -> Result<(), TraceError> {
        if k >= self.n {
            return Err(TraceError::InvalidAxis { axis: k, nvars: self.n });
        }
        if start.len() != self.n {
            return Err(TraceError::Dimension {
                expected: self.n,
                got: start.len(),
            });
        }
        let residual = self.constraint_residual(start)?;
        if residual > 1e-8 {
            return Err(TraceError::NotOnCurve { residual });
        }
        Ok(())
    }

    fn finish(
        &self,
        k: usize,
        points: Vec<Vec<f64>>,
        center_index: usize,
        truncated: (bool, bool),
    ) -> Result<CurveSample, TraceError> {
        let f_values = points
            .iter()
            .map(|p| self.objective(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CurveSample {
            axis: k,
            params: points.iter().map(|p| p[k]).collect(),
            points,
            f_values,
            center_index,
            truncated,
        })
    }
}

fn insert(y: &[f64], k: usize, xk: f64) -> Vec<f64> {
    let mut full = Vec::with_capacity(y.len() + 1);
    full.extend_from_slice(&y[..k]);
    full.push(xk);
    full.extend_from_slice(&y[k..]);
    full
}

fn remove(x: &[f64], k: usize) -> Vec<f64> {
    x.iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &v)| v)
        .collect()
}

/// March along the constraint curve from `start`, `count` stations of size
/// `step` on each side of it.
pub fn trace_curve(
    p: &Problem,
    k: usize,
    start: &[f64],
    step: f64,
    count: usize,
) -> Result<CurveSample, TraceError> {
    Tracer::new(p).trace(k, start, step, count)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("need {needed} samples around index {center} for order {order}, have {below} below and {above} above")]
    InsufficientStencil {
        order: usize,
        center: usize,
        needed: usize,
        below: usize,
        above: usize,
    },
    #[error("parameter values are not uniformly spaced")]
    NonUniform,
}

/// Finite-difference weights for the `order`-th derivative at 0 from the
/// given nodes (Fornberg's recursion).
pub fn fd_weights(nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for m in (1..=mn).rev() {
                    c[i][m] = c1 * (m as f64 * c[i - 1][m - 1] - c5 * c[i - 1][m]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for m in (1..=mn).rev() {
                c[j][m] = (c4 * c[j][m] - m as f64 * c[j][m - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Richardson extrapolation of estimates taken at steps `h, 2h, 4h, ...`
/// whose error expands in the given powers of `h`.
fn richardson(mut est: Vec<f64>, powers: &[i32]) -> f64 {
    for &p in powers.iter().take(est.len().saturating_sub(1)) {
        let f = 2f64.powi(p);
        est = est.windows(2).map(|w| (f * w[0] - w[1]) / (f - 1.0)).collect();
    }
    est[0]
}

/// Estimates of `d^m f / dx_k^m` along the curve at `center`, for
/// `m = 1..=max_order`. Central differences are used where the sample
/// allows, otherwise one-sided ones; both are Richardson-refined over the
/// spacings `h`, `2h`, `4h`.
pub fn numeric_curve_derivatives(
    sample: &CurveSample,
    center: usize,
    max_order: usize,
) -> Result<Vec<f64>, OracleError> {
    let t = &sample.params;
    let v = &sample.f_values;
    if t.len() >= 2 {
        let h0 = t[1] - t[0];
        if t.windows(2).any(|w| ((w[1] - w[0]) - h0).abs() > 1e-9 * h0.abs().max(1e-300)) {
            return Err(OracleError::NonUniform);
        }
    }
    let below = center;
    let above = t.len().saturating_sub(center + 1);
    let h = if t.len() >= 2 { t[1] - t[0] } else { 0.0 };
    let levels = 3usize;
    let mut out = Vec::with_capacity(max_order);
    for m in 1..=max_order {
        let half = m.div_ceil(2);
        let central_reach = half << (levels - 1);
        let one_sided_reach = m << (levels - 1);
        let at = |off: isize| v[(center as isize + off) as usize];
        let estimate = if below >= central_reach && above >= central_reach {
            let nodes: Vec<f64> = (-(half as isize)..=half as isize).map(|j| j as f64).collect();
            let w = fd_weights(&nodes, m);
            let est = (0..levels)
                .map(|l| {
                    let s = 1isize << l;
                    let hs = h * s as f64;
                    nodes
                        .iter()
                        .zip(&w)
                        .map(|(&j, &wj)| wj * at(j as isize * s))
                        .sum::<f64>()
                        / hs.powi(m as i32)
                })
                .collect();
            richardson(est, &[2, 4])
        } else if above >= one_sided_reach || below >= one_sided_reach {
            let dir: isize = if above >= one_sided_reach { 1 } else { -1 };
            let nodes: Vec<f64> = (0..=m).map(|j| (j as isize * dir) as f64).collect();
            let w = fd_weights(&nodes, m);
            let est = (0..levels)
                .map(|l| {
                    let s = 1isize << l;
                    let hs = h * s as f64;
                    nodes
                        .iter()
                        .zip(&w)
                        .map(|(&j, &wj)| wj * at(j as isize * s))
                        .sum::<f64>()
                        / hs.powi(m as i32)
                })
                .collect();
            richardson(est, &[1, 2])
        } else {
            return Err(OracleError::InsufficientStencil {
                order: m,
                center,
                needed: central_reach.min(one_sided_reach),
                below,
                above,
            });
        };
        out.push(estimate);
    }
    Ok(out)
}
