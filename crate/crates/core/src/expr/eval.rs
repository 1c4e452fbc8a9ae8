use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::{Expr, Func, Node};

/// Which rule of real arithmetic an evaluation violated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    PowOfNegative,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogOfNonPositive => "log of a non-positive value",
            DomainKind::SqrtOfNegative => "sqrt of a negative value",
            DomainKind::PowOfNegative => "non-integer power of a negative value",
            DomainKind::NonFinite => "non-finite intermediate value",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{kind} at point {point:?}")]
    Domain { kind: DomainKind, point: Vec<f64> },
    #[error("point has {got} coordinates but the expression uses variable index {needed}")]
    Dimension { needed: usize, got: usize },
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    PowInt(usize, i32),
    Func(Func, usize),
}

/// A flattened, register-based program evaluating one or more expressions.
///
/// Shared subtrees are compiled once, so expressions coming out of cofactor
/// expansion or repeated differentiation evaluate in time linear in their
/// DAG size.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    max_var: Option<usize>,
}

impl Tape {
    pub fn new(exprs: &[Expr]) -> Tape {
        let mut builder = Builder {
            ops: Vec::new(),
            memo: HashMap::new(),
            max_var: None,
        };
        let outputs = exprs.iter().map(|e| builder.emit(e)).collect();
        Tape {
            ops: builder.ops,
            outputs,
            max_var: builder.max_var,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluate every output into `out`, using `scratch` as register file.
    pub fn eval_into(
        &self,
        point: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        if let Some(m) = self.max_var {
            if m >= point.len() {
                return Err(EvalError::Dimension {
                    needed: m,
                    got: point.len(),
                });
            }
        }
        scratch.clear();
        scratch.reserve(self.ops.len());
        let fail = |kind| EvalError::Domain {
            kind,
            point: point.to_vec(),
        };
        for op in &self.ops {
            let r = &scratch[..];
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => point[i],
                Op::Neg(a) => -r[a],
                Op::Add(a, b) => r[a] + r[b],
                Op::Sub(a, b) => r[a] - r[b],
                Op::Mul(a, b) => r[a] * r[b],
                Op::Div(a, b) => {
                    if r[b] == 0.0 {
                        return Err(fail(DomainKind::DivisionByZero));
                    }
                    r[a] / r[b]
                }
                Op::PowInt(a, n) => pow_int(r[a], n).map_err(fail)?,
                Op::Pow(a, b) => pow_value(r[a], r[b]).map_err(fail)?,
                Op::Func(f, a) => func_value(f, r[a]).map_err(fail)?,
            };
            if !v.is_finite() {
                return Err(fail(DomainKind::NonFinite));
            }
            scratch.push(v);
        }
        for (slot, &reg) in out.iter_mut().zip(&self.outputs) {
            *slot = scratch[reg];
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(point, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Convenience for single-output tapes.
    pub fn eval_one(&self, point: &[f64]) -> Result<f64, EvalError> {
        let mut scratch = Vec::new();
        let mut out = [0.0];
        self.eval_into(point, &mut scratch, &mut out)?;
        Ok(out[0])
    }
}

pub(crate) fn pow_int(base: f64, n: i32) -> Result<f64, DomainKind> {
    if n < 0 && base == 0.0 {
        return Err(DomainKind::DivisionByZero);
    }
    Ok(base.powi(n))
}

/// `base^exp` with the real-domain contract: integral exponents use repeated
/// multiplication, everything else goes through `exp(exp * ln(base))`.
pub(crate) fn pow_value(base: f64, exp: f64) -> Result<f64, DomainKind> {
    if exp.fract() == 0.0 && exp.abs() <= 1024.0 {
        return pow_int(base, exp as i32);
    }
    if base > 0.0 {
        Ok((exp * base.ln()).exp())
    } else if base == 0.0 && exp > 0.0 {
        Ok(0.0)
    } else if base == 0.0 {
        Err(DomainKind::DivisionByZero)
    } else {
        Err(DomainKind::PowOfNegative)
    }
}

pub(crate) fn func_value(f: Func, x: f64) -> Result<f64, DomainKind> {
    match f {
        Func::Sin => Ok(x.sin()),
        Func::Cos => Ok(x.cos()),
        Func::Tan => Ok(x.tan()),
        Func::Exp => Ok(x.exp()),
        Func::Log if x <= 0.0 => Err(DomainKind::LogOfNonPositive),
        Func::Log => Ok(x.ln()),
        Func::Sqrt if x < 0.0 => Err(DomainKind::SqrtOfNegative),
        Func::Sqrt => Ok(x.sqrt()),
    }
}

struct Builder {
    ops: Vec<Op>,
    memo: HashMap<usize, usize>,
    max_var: Option<usize>,
}

impl Builder {
    fn emit(&mut self, e: &Expr) -> usize {
        if let Some(&r) = self.memo.get(&e.key()) {
            return r;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(i) => {
                self.max_var = Some(self.max_var.map_or(*i, |m| m.max(*i)));
                Op::Var(*i)
            }
            Node::Neg(a) => Op::Neg(self.emit(a)),
            Node::Add(a, b) => Op::Add(self.emit(a), self.emit(b)),
            Node::Sub(a, b) => Op::Sub(self.emit(a), self.emit(b)),
            Node::Mul(a, b) => Op::Mul(self.emit(a), self.emit(b)),
            Node::Div(a, b) => Op::Div(self.emit(a), self.emit(b)),
            Node::Pow(a, b) => match b.as_const() {
                Some(n) if n.fract() == 0.0 && n.abs() <= 1024.0 => {
                    Op::PowInt(self.emit(a), n as i32)
                }
                _ => Op::Pow(self.emit(a), self.emit(b)),
            },
            Node::Func(f, a) => Op::Func(*f, self.emit(a)),
        };
        self.ops.push(op);
        let reg = self.ops.len() - 1;
        self.memo.insert(e.key(), reg);
        reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn evaluates_polynomial_objectives() {
        let vars = names(&["x", "y"]);
        let f = parse("x^2 + 2*y^2", &vars).unwrap();
        assert_eq!(f.evaluate(&[1.0, 0.0]).unwrap(), 1.0);
        let f = parse("x^2 + 2*y^2 - 2*x*y^2", &vars).unwrap();
        let v = f.evaluate(&[2.0 / 3.0, 1.0 / 3f64.sqrt()]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Expr::constant(7.0).evaluate(&[0.3, -2.0]).unwrap(), 7.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let vars = names(&["x"]);
        let cases = [
            ("log(x)", DomainKind::LogOfNonPositive),
            ("sqrt(x - 1)", DomainKind::SqrtOfNegative),
            ("1/x", DomainKind::DivisionByZero),
            ("(x - 1)^0.5", DomainKind::PowOfNegative),
            ("x^-2", DomainKind::DivisionByZero),
        ];
        for (text, kind) in cases {
            let e = parse(text, &vars).unwrap();
            match e.evaluate(&[0.0]) {
                Err(EvalError::Domain { kind: k, point }) => {
                    assert_eq!(k, kind, "{text}");
                    assert_eq!(point, vec![0.0]);
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn shared_subtrees_compile_once() {
        let x = Expr::var(0);
        let mut e = x.clone();
        for _ in 0..40 {
            e = &e * &e;
        }
        // 2^40 leaves as a tree; 41 nodes as a DAG.
        assert_eq!(Tape::new(&[e.clone()]).len(), 41);
        assert_eq!(e.evaluate(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let e = Expr::var(2);
        assert!(matches!(
            e.evaluate(&[1.0]),
            Err(EvalError::Dimension { .. })
        ));
    }
}
