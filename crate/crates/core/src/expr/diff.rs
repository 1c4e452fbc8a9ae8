use std::collections::HashMap;

use super::{Expr, Func, Node};

impl Expr {
    /// Exact partial derivative with respect to variable `var`, simplified.
    pub fn differentiate(&self, var: usize) -> Expr {
        let mut memo = HashMap::new();
        diff_rec(self, var, &mut memo).simplify()
    }
}

fn diff_rec(e: &Expr, var: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.key()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(i) => {
            if *i == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => -diff_rec(a, var, memo),
        Node::Add(a, b) => diff_rec(a, var, memo) + diff_rec(b, var, memo),
        Node::Sub(a, b) => diff_rec(a, var, memo) - diff_rec(b, var, memo),
        Node::Mul(a, b) => {
            let da = diff_rec(a, var, memo);
            let db = diff_rec(b, var, memo);
            da * b + a * db
        }
        Node::Div(a, b) => {
            let da = diff_rec(a, var, memo);
            let db = diff_rec(b, var, memo);
            if db.is_zero() {
                da / b
            } else {
                (da * b - a * db) / b.powi(2)
            }
        }
        Node::Pow(base, exp) => {
            let db = diff_rec(base, var, memo);
            if !exp.depends_on(var) {
                // d(u^c) = c * u^(c-1) * u'
                let lowered = match exp.as_const() {
                    Some(c) => base.pow(Expr::constant(c - 1.0)),
                    None => base.pow(exp - Expr::one()),
                };
                exp * lowered * db
            } else {
                // d(u^v) = u^v * (v' ln u + v u'/u)
                let dexp = diff_rec(exp, var, memo);
                let ln = Expr::apply(Func::Log, base.clone());
                e * (dexp * ln + exp * db / base)
            }
        }
        Node::Func(f, a) => {
            let da = diff_rec(a, var, memo);
            let outer = match f {
                Func::Sin => Expr::apply(Func::Cos, a.clone()),
                Func::Cos => -Expr::apply(Func::Sin, a.clone()),
                Func::Tan => Expr::one() / Expr::apply(Func::Cos, a.clone()).powi(2),
                Func::Exp => e.clone(),
                Func::Log => Expr::one() / a,
                Func::Sqrt => Expr::one() / (Expr::constant(2.0) * e),
            };
            outer * da
        }
    };
    let d = shallow_zero(d);
    memo.insert(e.key(), d.clone());
    d
}

/// Cheap pruning so derivative trees of untouched subexpressions do not grow
/// before the final simplification pass.
fn shallow_zero(d: Expr) -> Expr {
    match d.node() {
        Node::Neg(a) if a.is_zero() => Expr::zero(),
        Node::Add(a, b) | Node::Sub(a, b) if a.is_zero() && b.is_zero() => Expr::zero(),
        Node::Mul(a, b) if a.is_zero() || b.is_zero() => Expr::zero(),
        Node::Div(a, _) if a.is_zero() => Expr::zero(),
        Node::Add(a, b) if b.is_zero() => a.clone(),
        Node::Add(a, b) if a.is_zero() => b.clone(),
        Node::Sub(a, b) if b.is_zero() => a.clone(),
        Node::Mul(a, b) if b.is_const(1.0) => a.clone(),
        Node::Mul(a, b) if a.is_const(1.0) => b.clone(),
        _ => d,
    }
}
