//! Run reports and their byte-deterministic JSON and CSV encodings.
//!
//! Numbers are written with 17 significant digits (`%.17g`), so every value
//! parses back to the exact double. Object keys are sorted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::lagrange::{LagrangePoint, MatchReport};
use crate::plot::PlotData;
use crate::problem::Problem;
use crate::solver::SolverConfig;
use crate::stationary::{AxisBoundaries, Diagnostic, StationaryPoint};
use crate::taylor::TaylorSeries;

/// C's `%.17g`: shortest of fixed or exponent notation, trailing zeros
/// dropped.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Pretty JSON with `%.17g` floats. Non-finite floats become `null`.
struct G17Formatter(PrettyFormatter<'static>);

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            w.write_all(format_g17(v).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize any value as sorted-key JSON with `%.17g` floats.
pub fn to_json<T: Serialize>(value: &T) -> String {
    // Going through `Value` sorts keys: its map is a BTreeMap.
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, G17Formatter(PrettyFormatter::new()));
    v.serialize(&mut ser).expect("writing to a Vec");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintEcho {
    pub g: String,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemEcho {
    pub variables: Vec<String>,
    pub objective: String,
    pub constraints: Vec<ConstraintEcho>,
    pub bounds: Vec<(f64, f64)>,
}

impl ProblemEcho {
    pub fn new(p: &Problem) -> ProblemEcho {
        let names = p.names();
        ProblemEcho {
            variables: names.to_vec(),
            objective: p.objective().display(names).to_string(),
            constraints: p
                .constraints()
                .iter()
                .map(|c| ConstraintEcho {
                    g: c.g.display(names).to_string(),
                    target: c.target,
                })
                .collect(),
            bounds: p.bounds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub command: String,
    pub axes: Vec<String>,
    pub at: Option<Vec<f64>>,
    pub order: usize,
    pub solver: SolverConfig,
}

/// One requested Taylor series, or why it could not be produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorEntry {
    pub axis: String,
    pub center: Vec<f64>,
    pub series: Option<TaylorSeries>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodStats {
    pub starts: usize,
    pub total_iterations: usize,
    pub unknowns: usize,
    pub roots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossValidation {
    pub lagrange_points: Vec<LagrangePoint>,
    pub matching: Option<MatchReport>,
    pub tolerance: f64,
    pub determinant: Option<MethodStats>,
    pub lagrange: MethodStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub problem: ProblemEcho,
    pub config: ConfigEcho,
    pub stationary_points: Vec<StationaryPoint>,
    pub boundaries: Vec<AxisBoundaries>,
    pub taylor: Vec<TaylorEntry>,
    pub cross_validation: Option<CrossValidation>,
    pub diagnostics: Vec<Diagnostic>,
    /// Wall-clock timings, only when requested: they would break
    /// byte-determinism.
    pub timing_ms: Option<BTreeMap<String, f64>>,
    #[serde(skip)]
    pub plot: Option<PlotData>,
}

impl RunReport {
    pub fn new(p: &Problem, config: ConfigEcho) -> RunReport {
        RunReport {
            problem: ProblemEcho::new(p),
            config,
            stationary_points: Vec::new(),
            boundaries: Vec::new(),
            taylor: Vec::new(),
            cross_validation: None,
            diagnostics: Vec::new(),
            timing_ms: None,
            plot: None,
        }
    }

    /// Whether the command produced no points at all (exit status 3).
    pub fn found_nothing(&self) -> bool {
        match self.config.command.as_str() {
            "solve" => self.stationary_points.is_empty(),
            "boundaries" => self.boundaries.iter().all(|b| b.points.is_empty()),
            "taylor" => self.taylor.iter().all(|t| t.series.is_none()),
            "lagrange" | "compare" => {
                self.stationary_points.is_empty()
                    && self
                        .cross_validation
                        .as_ref()
                        .is_none_or(|c| c.lagrange_points.is_empty())
            }
            "sample" => self.plot.as_ref().is_none_or(|d| d.sample.points.is_empty()),
            _ => false,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// Tabular sections, each introduced by a `# name` line.
    pub fn to_csv(&self) -> String {
        let names = &self.problem.variables;
        let cols = names.join(",");
        let row = |vals: &[f64]| vals.iter().map(|v| format_g17(*v)).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        if let Some(plot) = &self.plot {
            return plot.to_csv();
        }
        let _ = writeln!(out, "# stationary_points");
        let _ = writeln!(out, "{cols},f,label");
        for sp in &self.stationary_points {
            let label = serde_json::to_value(sp.label).expect("label serializes");
            let _ = writeln!(out, "{},{},{}", row(&sp.point), format_g17(sp.f_value), label.as_str().unwrap_or(""));
        }
        let _ = writeln!(out, "# boundaries");
        let _ = writeln!(out, "axis,status,{cols}");
        for b in &self.boundaries {
            let status = serde_json::to_value(b.status).expect("status serializes");
            let status = status.as_str().unwrap_or("");
            if b.points.is_empty() {
                let _ = writeln!(out, "{},{status}{}", names[b.axis], ",".repeat(names.len()));
            }
            for bp in &b.points {
                let _ = writeln!(out, "{},{status},{}", names[b.axis], row(&bp.point));
            }
        }
        let _ = writeln!(out, "# taylor");
        let _ = writeln!(out, "axis,{cols},power,coefficient");
        for t in &self.taylor {
            if let Some(s) = &t.series {
                for (m, c) in s.coefficients.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{m},{}", t.axis, row(&t.center), format_g17(*c));
                }
            }
        }
        if let Some(cv) = &self.cross_validation {
            let lambdas: Vec<String> = (1..names.len()).map(|k| format!("lambda_{k}")).collect();
            let _ = writeln!(out, "# lagrange_points");
            let _ = writeln!(out, "{cols},{},residual", lambdas.join(","));
            for lp in &cv.lagrange_points {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    row(&lp.point),
                    row(&lp.multipliers),
                    format_g17(lp.residual_norm)
                );
            }
        }
        out
    }
}
