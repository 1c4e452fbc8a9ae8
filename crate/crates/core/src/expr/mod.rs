//! Immutable symbolic expression trees.
//!
//! An [`Expr`] is a cheaply clonable handle to a shared node. Subtrees are
//! reference counted, so derived formulas (determinants, derivatives) reuse
//! the structure of their inputs instead of copying it. Variables are plain
//! indices into the owning problem's variable list; names only matter when
//! parsing and printing.

mod diff;
mod eval;
mod parse;
mod print;
mod simplify;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

pub use eval::{DomainKind, EvalError, Tape};
pub use parse::{parse, ParseError};
pub use print::ExprDisplay;
pub(crate) use print::format_number;

/// Elementary functions understood by the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// One node of an expression tree.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Func(Func, Expr),
}

/// Shared handle to an immutable expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn new(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(value: f64) -> Expr {
        Expr::new(Node::Const(value))
    }

    pub fn var(index: usize) -> Expr {
        Expr::new(Node::Var(index))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn pow(&self, exponent: Expr) -> Expr {
        Expr::new(Node::Pow(self.clone(), exponent))
    }

    pub fn powi(&self, exponent: i32) -> Expr {
        self.pow(Expr::constant(f64::from(exponent)))
    }

    pub fn apply(func: Func, arg: Expr) -> Expr {
        Expr::new(Node::Func(func, arg))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// The constant value, if this node is a constant.
    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    pub fn is_zero(&self) -> bool {
        self.is_const(0.0)
    }

    /// Identity of the shared node, used as a memoization key.
    pub(crate) fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Number of distinct nodes reachable from this root.
    pub fn node_count(&self) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        seen.len()
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            if let Node::Var(i) = *e.0 {
                best = Some(best.map_or(i, |b: usize| b.max(i)));
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        best
    }

    pub fn depends_on(&self, var: usize) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            if let Node::Var(i) = *e.0 {
                if i == var {
                    return true;
                }
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        false
    }

    pub(crate) fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match &*self.0 {
            Node::Const(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Func(_, a) => f(a),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                f(a);
                f(b);
            }
        }
    }

    /// Evaluate at a point. Compiles a tape on every call; hot loops should
    /// build a [`Tape`] once and reuse it.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        Tape::new(std::slice::from_ref(self)).eval_one(point)
    }

    /// Render with the given variable names.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay::new(self, names)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        match (&*self.0, &*other.0) {
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Func(f, a), Node::Func(g, b)) => f == g && a == b,
            (Node::Add(a, b), Node::Add(c, d))
            | (Node::Sub(a, b), Node::Sub(c, d))
            | (Node::Mul(a, b), Node::Mul(c, d))
            | (Node::Div(a, b), Node::Div(c, d))
            | (Node::Pow(a, b), Node::Pow(c, d)) => a == c && b == d,
            _ => false,
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", ExprDisplay::new(self, &[]))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", ExprDisplay::new(self, &[]))
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(Node::$variant(self, rhs))
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(Node::$variant(self.clone(), rhs.clone()))
            }
        }
        impl std::ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(Node::$variant(self.clone(), rhs))
            }
        }
        impl std::ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(Node::$variant(self, rhs.clone()))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self))
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self.clone()))
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Expr {
        Expr::constant(value)
    }
}
