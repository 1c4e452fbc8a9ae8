//! Canonical printer. Output re-parses to the same tree (negated literals
//! aside, which the parser folds into negative constants).

use std::fmt;

use super::{Expr, Node};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Sum = 1,
    Product = 2,
    Unary = 3,
    Power = 4,
    Atom = 5,
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl<'a> ExprDisplay<'a> {
    pub fn new(expr: &'a Expr, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr, names }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(&mut out, self.expr, self.names);
        f.write_str(&out)
    }
}

/// Round-trip formatting of a literal.
pub(crate) fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn prec(e: &Expr) -> Prec {
    match e.node() {
        Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => Prec::Unary,
        Node::Const(_) | Node::Var(_) | Node::Func(..) => Prec::Atom,
        Node::Neg(_) => Prec::Unary,
        Node::Add(..) | Node::Sub(..) => Prec::Sum,
        Node::Mul(..) | Node::Div(..) => Prec::Product,
        Node::Pow(..) => Prec::Power,
    }
}

fn wrapped(out: &mut String, e: &Expr, names: &[String], parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, e, names);
        out.push(')');
    } else {
        write_expr(out, e, names);
    }
}

fn write_expr(out: &mut String, e: &Expr, names: &[String]) {
    match e.node() {
        Node::Const(c) => out.push_str(&format_number(*c)),
        Node::Var(i) => match names.get(*i) {
            Some(n) => out.push_str(n),
            None => {
                out.push('x');
                out.push_str(&i.to_string());
            }
        },
        Node::Neg(a) => {
            out.push('-');
            wrapped(out, a, names, prec(a) < Prec::Unary);
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let op = if matches!(e.node(), Node::Add(..)) { " + " } else { " - " };
            wrapped(out, a, names, prec(a) < Prec::Sum);
            out.push_str(op);
            wrapped(out, b, names, prec(b) <= Prec::Sum);
        }
        Node::Mul(a, b) | Node::Div(a, b) => {
            let op = if matches!(e.node(), Node::Mul(..)) { "*" } else { "/" };
            wrapped(out, a, names, prec(a) < Prec::Product);
            out.push_str(op);
            wrapped(out, b, names, prec(b) <= Prec::Product);
        }
        Node::Pow(a, b) => {
            wrapped(out, a, names, prec(a) <= Prec::Power);
            out.push('^');
            wrapped(out, b, names, prec(b) < Prec::Unary);
        }
        Node::Func(func, a) => {
            out.push_str(func.name());
            out.push('(');
            write_expr(out, a, names);
            out.push(')');
        }
    }
}
