//! Lightweight algebraic cleanup: constant folding, 0/1 identities and sign
//! normalization. No canonical polynomial form is attempted.

use std::collections::HashMap;

use super::eval::{func_value, pow_value};
use super::{Expr, Node};

impl Expr {
    /// Rewrite to an equivalent, usually smaller, expression. Applied
    /// bottom-up until no rule fires.
    pub fn simplify(&self) -> Expr {
        let mut memo = HashMap::new();
        let mut cur = simplify_rec(self, &mut memo);
        // Rules only ever shrink or sign-normalize, so this settles fast.
        for _ in 0..8 {
            memo.clear();
            let next = simplify_rec(&cur, &mut memo);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }
}

fn simplify_rec(e: &Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.key()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) | Node::Var(_) => e.clone(),
        Node::Neg(a) => rewrite_neg(simplify_rec(a, memo)),
        Node::Add(a, b) => rewrite_add(simplify_rec(a, memo), simplify_rec(b, memo)),
        Node::Sub(a, b) => rewrite_sub(simplify_rec(a, memo), simplify_rec(b, memo)),
        Node::Mul(a, b) => rewrite_mul(simplify_rec(a, memo), simplify_rec(b, memo)),
        Node::Div(a, b) => rewrite_div(simplify_rec(a, memo), simplify_rec(b, memo)),
        Node::Pow(a, b) => rewrite_pow(simplify_rec(a, memo), simplify_rec(b, memo)),
        Node::Func(f, a) => {
            let a = simplify_rec(a, memo);
            match a.as_const().map(|c| func_value(*f, c)) {
                Some(Ok(v)) if v.is_finite() => Expr::constant(v),
                _ => Expr::apply(*f, a),
            }
        }
    };
    memo.insert(e.key(), out.clone());
    out
}

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then(|| Expr::constant(v))
}

fn rewrite_neg(a: Expr) -> Expr {
    if let Some(c) = a.as_const() {
        return Expr::constant(-c);
    }
    match a.node() {
        Node::Neg(inner) => inner.clone(),
        Node::Mul(l, r) => match l.as_const() {
            Some(c) => Expr::constant(-c) * r,
            None => -a,
        },
        Node::Sub(l, r) if l.is_zero() => r.clone(),
        Node::Div(l, r) => match negated_product(l) {
            Some(m) => rewrite_div(m, r.clone()),
            None => -a,
        },
        _ => -a,
    }
}

fn is_power_of_two(c: f64) -> bool {
    let m = c.abs();
    m.is_normal() && m.to_bits() & ((1u64 << 52) - 1) == 0
}

fn rewrite_add(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(c) = fold(x + y) {
            return c;
        }
    }
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    if let Node::Neg(inner) = b.node() {
        return rewrite_sub(a, inner.clone());
    }
    if let Some(c) = b.as_const() {
        if c < 0.0 {
            return a - Expr::constant(-c);
        }
    }
    if let Some(m) = negated_product(&b) {
        return a - m;
    }
    if let Node::Neg(inner) = a.node() {
        return rewrite_sub(b, inner.clone());
    }
    a + b
}

fn rewrite_sub(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(c) = fold(x - y) {
            return c;
        }
    }
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return rewrite_neg(b);
    }
    if a == b {
        return Expr::zero();
    }
    if let Node::Neg(inner) = b.node() {
        return rewrite_add(a, inner.clone());
    }
    if let Some(c) = b.as_const() {
        if c < 0.0 {
            return a + Expr::constant(-c);
        }
    }
    if let Some(m) = negated_product(&b) {
        return a + m;
    }
    a - b
}

/// `c*r` with `c < 0` as `(-c)*r` (also when the constant leads a nested
/// left factor), so sums absorb the sign exactly.
fn negated_product(e: &Expr) -> Option<Expr> {
    match e.node() {
        Node::Mul(l, r) => match l.as_const() {
            Some(c) if c < 0.0 => Some(rewrite_mul(Expr::constant(-c), r.clone())),
            Some(_) => None,
            None => negated_product(l).map(|m| rewrite_mul(m, r.clone())),
        },
        _ => None,
    }
}

fn rewrite_mul(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(c) = fold(x * y) {
            return c;
        }
    }
    if a.is_zero() || b.is_zero() {
        return Expr::zero();
    }
    if a.is_const(1.0) {
        return b;
    }
    if b.is_const(1.0) {
        return a;
    }
    if a.is_const(-1.0) {
        return rewrite_neg(b);
    }
    if b.is_const(-1.0) {
        return rewrite_neg(a);
    }
    // Constants lead.
    if b.as_const().is_some() && a.as_const().is_none() {
        return rewrite_mul(b, a);
    }
    match (a.node(), b.node()) {
        (Node::Neg(x), Node::Neg(y)) => rewrite_mul(x.clone(), y.clone()),
        (Node::Neg(x), _) => rewrite_neg(rewrite_mul(x.clone(), b)),
        (_, Node::Neg(y)) => rewrite_neg(rewrite_mul(a, y.clone())),
        // c1*(c2*r) -> (c1*c2)*r, exact when one factor is a power of two.
        (Node::Const(c1), Node::Mul(l, r)) => match l.as_const() {
            Some(c2) if (is_power_of_two(*c1) || is_power_of_two(c2)) && fold(c1 * c2).is_some() => {
                rewrite_mul(Expr::constant(c1 * c2), r.clone())
            }
            _ => a * b,
        },
        _ => a * b,
    }
}

fn rewrite_div(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if y != 0.0 {
            if let Some(c) = fold(x / y) {
                return c;
            }
        }
    }
    if b.is_const(1.0) {
        return a;
    }
    if a.is_zero() && !b.is_zero() {
        return Expr::zero();
    }
    if b.is_const(-1.0) {
        return rewrite_neg(a);
    }
    match (a.node(), b.node()) {
        (Node::Neg(x), Node::Neg(y)) => rewrite_div(x.clone(), y.clone()),
        (Node::Neg(x), _) => rewrite_neg(rewrite_div(x.clone(), b)),
        _ => a / b,
    }
}

fn rewrite_pow(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Ok(v) = pow_value(x, y) {
            if let Some(c) = fold(v) {
                return c;
            }
        }
    }
    if b.is_zero() {
        return Expr::one();
    }
    if b.is_const(1.0) {
        return a;
    }
    if a.is_const(1.0) {
        return Expr::one();
    }
    a.pow(b)
}
