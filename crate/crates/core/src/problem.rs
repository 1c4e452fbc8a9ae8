use std::collections::HashSet;

use thiserror::Error;

use crate::expr::{parse, Expr, ParseError};

/// One equality constraint `g(x) = target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub g: Expr,
    pub target: f64,
}

impl Constraint {
    /// `g - target`, the residual form used by every system builder.
    pub fn residual(&self) -> Expr {
        if self.target == 0.0 {
            self.g.clone()
        } else {
            (&self.g - Expr::constant(self.target)).simplify()
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("need at least 2 variables, found {0}")]
    TooFewVariables(usize),
    #[error("expected {expected} constraints, found {found}")]
    ConstraintCount { expected: usize, found: usize },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("expression refers to variable #{index} but only {nvars} are declared")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("box needs one interval per variable ({expected}), found {found}")]
    BoxCount { expected: usize, found: usize },
    #[error("constraint target must be finite, found {0}")]
    NonFiniteTarget(f64),
    #[error("box for `{name}` needs finite lo < hi, found [{lo}, {hi}]")]
    InvalidBox { name: String, lo: f64, hi: f64 },
    #[error("{what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: ParseError,
    },
}

/// Objective over `N` named variables with `N - 1` equality constraints and
/// an optional search box.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    names: Vec<String>,
    f: Expr,
    constraints: Vec<Constraint>,
    bounds: Option<Vec<(f64, f64)>>,
}

pub const DEFAULT_BOX: (f64, f64) = (-5.0, 5.0);

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "pi" | "e")
        && crate::expr::Func::from_name(name).is_none()
}

impl Problem {
    pub fn new(
        names: Vec<String>,
        f: Expr,
        constraints: Vec<Constraint>,
    ) -> Result<Problem, ProblemError> {
        let n = names.len();
        if n < 2 {
            return Err(ProblemError::TooFewVariables(n));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !valid_name(name) {
                return Err(ProblemError::InvalidName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ProblemError::DuplicateName(name.clone()));
            }
        }
        if constraints.len() != n - 1 {
            return Err(ProblemError::ConstraintCount {
                expected: n - 1,
                found: constraints.len(),
            });
        }
        for e in std::iter::once(&f).chain(constraints.iter().map(|c| &c.g)) {
            if let Some(index) = e.max_var().filter(|&m| m >= n) {
                return Err(ProblemError::VariableOutOfRange { index, nvars: n });
            }
        }
        if let Some(c) = constraints.iter().find(|c| !c.target.is_finite()) {
            return Err(ProblemError::NonFiniteTarget(c.target));
        }
        Ok(Problem {
            names,
            f,
            constraints,
            bounds: None,
        })
    }

    /// Build from expression text, e.g.
    /// `Problem::parse(&["x", "y"], "x^2 + 2*y^2", &[("x - y^2", 1.0)])`.
    pub fn parse(names: &[&str], f: &str, constraints: &[(&str, f64)]) -> Result<Problem, ProblemError> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let parse_as = |what: String, text: &str| {
            parse(text, &names).map_err(|source| ProblemError::Parse { what, source })
        };
        let f = parse_as("objective".into(), f)?;
        let constraints = constraints
            .iter()
            .enumerate()
            .map(|(i, (text, target))| {
                Ok(Constraint {
                    g: parse_as(format!("constraint {}", i + 1), text)?,
                    target: *target,
                })
            })
            .collect::<Result<Vec<_>, ProblemError>>()?;
        Problem::new(names, f, constraints)
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Problem, ProblemError> {
        if bounds.len() != self.names.len() {
            return Err(ProblemError::BoxCount {
                expected: self.names.len(),
                found: bounds.len(),
            });
        }
        for (name, &(lo, hi)) in self.names.iter().zip(&bounds) {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(ProblemError::InvalidBox {
                    name: name.clone(),
                    lo,
                    hi,
                });
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn with_uniform_box(self, lo: f64, hi: f64) -> Result<Problem, ProblemError> {
        let n = self.nvars();
        self.with_bounds(vec![(lo, hi); n])
    }

    pub fn nvars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn objective(&self) -> &Expr {
        &self.f
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Constraint functions `g_k` without their targets.
    pub fn constraint_functions(&self) -> Vec<Expr> {
        self.constraints.iter().map(|c| c.g.clone()).collect()
    }

    /// `g_k - C_k` for every constraint.
    pub fn constraint_residuals(&self) -> Vec<Expr> {
        self.constraints.iter().map(Constraint::residual).collect()
    }

    pub fn declared_bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    /// Declared box, or the default box on every axis.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_BOX; self.nvars()])
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}
