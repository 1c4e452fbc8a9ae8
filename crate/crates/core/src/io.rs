//! Line-oriented problem files.
//!
//! ```text
//! # comment
//! vars: x, y, z
//! f: x^2 - 2*y + z^3
//! g: x^2 + y + z = 1
//! g: y - z^2 = -1
//! box: -3 3
//! box z: -4 2
//! ```
//!
//! A constraint whose right-hand side is not constant is moved to the left,
//! `g: a = b` becoming `a - b = 0`. A constraint without `=` means `= 0`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::expr::{format_number, parse, Expr, ParseError};
use crate::problem::{Constraint, Problem, ProblemError, DEFAULT_BOX};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing `{0}:` line")]
    Missing(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> IoError {
    IoError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text)
}

/// Byte offset of `part` inside `whole`; `part` must be a subslice.
fn offset_in(whole: &str, part: &str) -> usize {
    part.as_ptr() as usize - whole.as_ptr() as usize
}

struct LineCtx<'a> {
    number: usize,
    raw: &'a str,
}

impl LineCtx<'_> {
    fn err_at(&self, part: &str, message: impl Into<String>) -> IoError {
        syntax(self.number, offset_in(self.raw, part) + 1, message)
    }

    fn expr(&self, text: &str, names: &[String], what: &str) -> Result<Expr, IoError> {
        parse(text, names).map_err(|e| {
            let (offset, detail) = match &e {
                ParseError::Syntax { offset, message } => (*offset, message.clone()),
                ParseError::UnknownIdentifier { name, offset } => {
                    (*offset, format!("unknown identifier `{name}`"))
                }
            };
            syntax(
                self.number,
                offset_in(self.raw, text) + offset + 1,
                format!("{what}: {detail}"),
            )
        })
    }

    fn interval(&self, text: &str) -> Result<(f64, f64), IoError> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        let [lo, hi] = parts[..] else {
            return Err(self.err_at(text, "box needs two numbers `lo hi`"));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| self.err_at(s, format!("malformed number `{s}`")))
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(self.err_at(text, format!("box needs finite lo < hi, found [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

pub fn parse_problem(text: &str) -> Result<Problem, IoError> {
    let mut names: Option<Vec<String>> = None;
    let mut objective: Option<Expr> = None;
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut uniform: Option<(f64, f64)> = None;
    let mut per_axis: Vec<(usize, (f64, f64))> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx { number: i + 1, raw };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once(':') else {
            return Err(ctx.err_at(content, "expected `directive: value`"));
        };
        let key = key.trim();
        let value = value.trim();
        let need_vars = || {
            names
                .as_deref()
                .ok_or_else(|| ctx.err_at(content, "`vars:` must come first"))
        };
        match key {
            "vars" => {
                if names.is_some() {
                    return Err(ctx.err_at(content, "`vars:` given twice"));
                }
                let list: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                names = Some(list);
            }
            "f" => {
                let vars = need_vars()?;
                if objective.is_some() {
                    return Err(ctx.err_at(content, "objective given twice"));
                }
                objective = Some(ctx.expr(value, vars, "objective")?);
            }
            "g" => {
                let vars = need_vars()?;
                let what = format!("constraint {}", constraints.len() + 1);
                let c = match value.split_once('=') {
                    None => Constraint {
                        g: ctx.expr(value, vars, &what)?,
                        target: 0.0,
                    },
                    Some((lhs, rhs)) => {
                        let (lhs, rhs) = (lhs.trim(), rhs.trim());
                        let l = ctx.expr(lhs, vars, &what)?;
                        let r = ctx.expr(rhs, vars, &what)?;
                        match r.simplify().as_const() {
                            Some(target) => Constraint { g: l, target },
                            None => Constraint {
                                g: (l - r).simplify(),
                                target: 0.0,
                            },
                        }
                    }
                };
                constraints.push(c);
            }
            "box" => uniform = Some(ctx.interval(value)?),
            _ => match key.strip_prefix("box") {
                Some(name) if name.starts_with(char::is_whitespace) => {
                    let vars = need_vars()?;
                    let name = name.trim();
                    let idx = vars
                        .iter()
                        .position(|v| v == name)
                        .ok_or_else(|| ctx.err_at(content, format!("unknown variable `{name}` in box")))?;
                    per_axis.push((idx, ctx.interval(value)?));
                }
                _ => return Err(ctx.err_at(content, format!("unknown directive `{key}`"))),
            },
        }
    }

    let names = names.ok_or(IoError::Missing("vars"))?;
    let f = objective.ok_or(IoError::Missing("f"))?;
    let n = names.len();
    let problem = Problem::new(names, f, constraints)?;
    if uniform.is_none() && per_axis.is_empty() {
        return Ok(problem);
    }
    let mut bounds = vec![uniform.unwrap_or(DEFAULT_BOX); n];
    for (i, b) in per_axis {
        bounds[i] = b;
    }
    Ok(problem.with_bounds(bounds)?)
}

/// Text that [`parse_problem`] reads back to an equal problem.
pub fn print_problem(p: &Problem) -> String {
    let names = p.names();
    let mut out = format!("vars: {}\n", names.join(", "));
    out.push_str(&format!("f: {}\n", p.objective().display(names)));
    for c in p.constraints() {
        out.push_str(&format!(
            "g: {} = {}\n",
            c.g.display(names),
            format_number(c.target)
        ));
    }
    if let Some(bounds) = p.declared_bounds() {
        if bounds.iter().all(|b| *b == bounds[0]) {
            let (lo, hi) = bounds[0];
            out.push_str(&format!("box: {} {}\n", format_number(lo), format_number(hi)));
        } else {
            for (name, &(lo, hi)) in names.iter().zip(bounds) {
                out.push_str(&format!(
                    "box {name}: {} {}\n",
                    format_number(lo),
                    format_number(hi)
                ));
            }
        }
    }
    out
}
