//! Raw plot data: traced constraint-curve points with objective values, and
//! for two-variable problems an objective contour grid over the box.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::Tape;
use crate::problem::Problem;
use crate::report::format_g17;
use crate::trace::{CurveSample, TraceError, Tracer};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("axis {axis} out of range for {nvars} variables")]
    InvalidAxis { axis: usize, nvars: usize },
    #[error("sample range needs finite lo < hi (or lo = hi with count 1)")]
    InvalidRange,
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("no point of the constraint curve found with {name} in [{lo}, {hi}]")]
    NoCurvePoint { name: String, lo: f64, hi: f64 },
    #[error("contour grid needs a two-variable problem and at least 2 nodes per side")]
    Contour,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub axis: usize,
    /// Parameter range; the problem box along `axis` when absent.
    pub range: Option<(f64, f64)>,
    pub count: usize,
    /// Point on the curve selecting the branch to follow.
    pub anchor: Option<Vec<f64>>,
    /// Nodes per side of the contour grid.
    pub contour: Option<usize>,
    pub seed: u64,
}

impl PlotSpec {
    pub fn new(axis: usize, count: usize) -> PlotSpec {
        PlotSpec {
            axis,
            range: None,
            count,
            anchor: None,
            contour: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourGrid {
    /// Row-major `(x, y, f)`; `f` is NaN where the objective is undefined.
    pub nodes: Vec<[f64; 3]>,
    pub side: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub names: Vec<String>,
    pub range: (f64, f64),
    pub requested: usize,
    pub sample: CurveSample,
    pub contour: Option<ContourGrid>,
}

impl PlotData {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let k = self.sample.axis;
        let name = &self.names[k];
        let _ = writeln!(
            out,
            "# curve along {name} in [{}, {}], {} of {} stations reached",
            format_g17(self.range.0),
            format_g17(self.range.1),
            self.sample.points.len(),
            self.requested
        );
        let (lo, hi) = self.sample.truncated;
        if lo || hi {
            let reached = |i: Option<&f64>| i.map_or("none".to_string(), |v| format_g17(*v));
            let _ = writeln!(
                out,
                "# truncated: below={lo} above={hi}; reached {name} in [{}, {}]",
                reached(self.sample.params.first()),
                reached(self.sample.params.last())
            );
        }
        let _ = writeln!(out, "{},f", self.names.join(","));
        for (p, f) in self.sample.points.iter().zip(&self.sample.f_values) {
            let row: Vec<String> = p.iter().chain(std::iter::once(f)).map(|v| format_g17(*v)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        if let Some(grid) = &self.contour {
            let _ = writeln!(out, "# contour {}x{}", grid.side, grid.side);
            let _ = writeln!(out, "{},f", self.names.join(","));
            for node in &grid.nodes {
                let row: Vec<String> = node.iter().map(|v| format_g17(*v)).collect();
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let h = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + h * i as f64 })
        .collect()
}

/// First curve point found by correcting seeded guesses at stations ordered
/// from the middle of the range outwards.
fn find_anchor(tracer: &Tracer, k: usize, bounds: &[(f64, f64)], stations: &[f64], seed: u64) -> Option<Vec<f64>> {
    let mut order: Vec<usize> = (0..stations.len()).collect();
    let mid = 0.5 * (stations[0] + stations[stations.len() - 1]);
    order.sort_by(|&a, &b| (stations[a] - mid).abs().total_cmp(&(stations[b] - mid).abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guesses: Vec<Vec<f64>> = (0..64)
        .map(|i| {
            bounds
                .iter()
                .map(|&(lo, hi)| if i == 0 { 0.5 * (lo + hi) } else { rng.gen_range(lo..hi) })
                .collect()
        })
        .collect();
    order.into_iter().take(9).find_map(|i| {
        guesses
            .iter()
            .find_map(|g| tracer.correct(k, stations[i], g))
    })
}

pub fn sample_for_plot(p: &Problem, spec: &PlotSpec) -> Result<PlotData, PlotError> {
    let n = p.nvars();
    let k = spec.axis;
    if k >= n {
        return Err(PlotError::InvalidAxis { axis: k, nvars: n });
    }
    if spec.count == 0 {
        return Err(PlotError::ZeroCount);
    }
    let bounds = p.bounds();
    let tracer = Tracer::new(p);
    let (lo, hi) = match (spec.range, &spec.anchor) {
        (Some(r), _) => r,
        (None, Some(a)) if spec.count == 1 && a.len() == n => (a[k], a[k]),
        (None, _) => bounds[k],
    };
    let valid = lo.is_finite() && hi.is_finite() && (lo < hi || (lo == hi && spec.count == 1));
    if !valid {
        return Err(PlotError::InvalidRange);
    }
    let stations = match &spec.anchor {
        Some(a) if spec.count == 1 && a.len() == n => vec![a[k]],
        _ => linspace(lo, hi, spec.count),
    };
    let anchor = match &spec.anchor {
        Some(a) => a.clone(),
        None => find_anchor(&tracer, k, &bounds, &stations, spec.seed).ok_or_else(|| PlotError::NoCurvePoint {
            name: p.names()[k].clone(),
            lo,
            hi,
        })?,
    };
    let sample = tracer.trace_stations(k, &anchor, &stations)?;
    let contour = match spec.contour {
        None => None,
        Some(side) if n == 2 && side >= 2 => {
            let tape = Tape::new(std::slice::from_ref(p.objective()));
            let xs = linspace(bounds[0].0, bounds[0].1, side);
            let ys = linspace(bounds[1].0, bounds[1].1, side);
            let nodes = ys
                .iter()
                .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                .map(|(x, y)| [x, y, tape.eval_one(&[x, y]).unwrap_or(f64::NAN)])
                .collect();
            Some(ContourGrid { nodes, side })
        }
        Some(_) => return Err(PlotError::Contour),
    };
    Ok(PlotData {
        names: p.names().to_vec(),
        range: (lo, hi),
        requested: stations.len(),
        sample,
        contour,
    })
}
