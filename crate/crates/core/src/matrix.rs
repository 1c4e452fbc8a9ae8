//! Symbolic matrices of the constrained problem: the problem Jacobian, the
//! constraint Jacobian, its column-deleted square blocks, and the
//! infinitesimal coefficients linking `dx_i` to `dx_k` along the constraint
//! curve.

use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};

/// Largest side accepted by the symbolic cofactor expansion.
pub const MAX_SYMBOLIC_SIDE: usize = 8;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, not square")]
    NotSquare { rows: usize, cols: usize },
    #[error("symbolic determinant of side {side} refused (limit is {MAX_SYMBOLIC_SIDE})")]
    TooLarge { side: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
}

/// Values a cofactor expansion can be carried out over.
pub trait CofactorRing: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
}

impl CofactorRing for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &f64) -> f64 {
        self + other
    }
    fn sub(&self, other: &f64) -> f64 {
        self - other
    }
    fn mul(&self, other: &f64) -> f64 {
        self * other
    }
    fn neg(&self) -> f64 {
        -self
    }
}

impl CofactorRing for Expr {
    fn zero() -> Expr {
        Expr::zero()
    }
    fn one() -> Expr {
        Expr::one()
    }
    fn is_zero(&self) -> bool {
        Expr::is_zero(self)
    }
    fn add(&self, other: &Expr) -> Expr {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        self + other
    }
    fn sub(&self, other: &Expr) -> Expr {
        if other.is_zero() {
            return self.clone();
        }
        self - other
    }
    fn mul(&self, other: &Expr) -> Expr {
        if self.is_zero() || other.is_zero() {
            return Expr::zero();
        }
        if self.is_const(1.0) {
            return other.clone();
        }
        if other.is_const(1.0) {
            return self.clone();
        }
        self * other
    }
    fn neg(&self) -> Expr {
        -self
    }
}

/// Determinant of the square block `rows x cols` of a row-major matrix with
/// `stride` columns, by cofactor expansion along the row with the most zeros.
pub(crate) fn cofactor_det<T: CofactorRing>(
    entries: &[T],
    stride: usize,
    rows: &[usize],
    cols: &[usize],
) -> T {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => return T::one(),
        1 => return entries[rows[0] * stride + cols[0]].clone(),
        _ => {}
    }
    let at = |r: usize, c: usize| &entries[r * stride + c];
    let (pivot_pos, _) = rows
        .iter()
        .enumerate()
        .map(|(i, &r)| (i, cols.iter().filter(|&&c| at(r, c).is_zero()).count()))
        .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let pivot_row = rows[pivot_pos];
    let sub_rows: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pivot_pos)
        .map(|(_, &r)| r)
        .collect();
    let mut acc: Option<T> = None;
    for (j, &c) in cols.iter().enumerate() {
        let a = at(pivot_row, c);
        if a.is_zero() {
            continue;
        }
        let sub_cols: Vec<usize> = cols
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &c)| c)
            .collect();
        let minor = cofactor_det(entries, stride, &sub_rows, &sub_cols);
        if minor.is_zero() {
            continue;
        }
        let term = a.mul(&minor);
        let negative = (pivot_pos + j) % 2 == 1;
        acc = Some(match acc {
            None if negative => term.neg(),
            None => term,
            Some(s) if negative => s.sub(&term),
            Some(s) => s.add(&term),
        });
    }
    acc.unwrap_or_else(T::zero)
}

/// Adjugate (transposed cofactor matrix) of an `n x n` row-major matrix.
pub(crate) fn adjugate<T: CofactorRing>(entries: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    if n == 0 {
        return out;
    }
    let all: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            let rows: Vec<usize> = all.iter().copied().filter(|&r| r != j).collect();
            let cols: Vec<usize> = all.iter().copied().filter(|&c| c != i).collect();
            let m = cofactor_det(entries, n, &rows, &cols);
            out[i * n + j] = if (i + j) % 2 == 1 { m.neg() } else { m };
        }
    }
    out
}

/// Rectangular matrix of expressions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
}

impl ExprMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Expr>) -> Result<ExprMatrix, MatrixError> {
        if entries.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Ok(ExprMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Expr {
        &self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    pub fn column(&self, c: usize) -> Vec<Expr> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    /// Copy with column `c` deleted.
    pub fn without_column(&self, c: usize) -> ExprMatrix {
        let entries = (0..self.rows)
            .flat_map(|r| {
                (0..self.cols)
                    .filter(move |&j| j != c)
                    .map(move |j| self.get(r, j).clone())
            })
            .collect();
        ExprMatrix {
            rows: self.rows,
            cols: self.cols - 1,
            entries,
        }
    }

    /// Entrywise evaluation, row-major.
    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        Tape::new(&self.entries).eval(point)
    }
}

/// Rows of partial derivatives of `funcs` over `nvars` variables.
fn jacobian_rows(funcs: &[&Expr], nvars: usize) -> Result<ExprMatrix, MatrixError> {
    for f in funcs {
        if let Some(m) = f.max_var() {
            if m >= nvars {
                return Err(MatrixError::VariableOutOfRange { index: m, nvars });
            }
        }
    }
    let entries = funcs
        .iter()
        .flat_map(|f| (0..nvars).map(move |j| f.differentiate(j)))
        .collect();
    ExprMatrix::new(funcs.len(), nvars, entries)
}

/// Square Jacobian of the problem: row 0 is the gradient of `f`, row `k`
/// the gradient of constraint `k`. The variable count is `g.len() + 1`.
pub fn problem_jacobian(f: &Expr, g: &[Expr]) -> Result<ExprMatrix, MatrixError> {
    let n = g.len() + 1;
    let funcs: Vec<&Expr> = std::iter::once(f).chain(g.iter()).collect();
    jacobian_rows(&funcs, n)
}

/// `(N-1) x N` Jacobian of the constraint functions.
pub fn constraint_jacobian(g: &[Expr]) -> Result<ExprMatrix, MatrixError> {
    let n = g.len() + 1;
    let funcs: Vec<&Expr> = g.iter().collect();
    jacobian_rows(&funcs, n)
}

/// Square constraint matrix for axis `k`: the constraint Jacobian with
/// column `k` removed.
pub fn constraint_matrix(jg: &ExprMatrix, k: usize) -> Result<ExprMatrix, MatrixError> {
    if jg.cols != jg.rows + 1 {
        return Err(MatrixError::DimensionMismatch {
            expected: jg.rows + 1,
            found: jg.cols,
        });
    }
    if k >= jg.cols {
        return Err(MatrixError::VariableOutOfRange {
            index: k,
            nvars: jg.cols,
        });
    }
    Ok(jg.without_column(k))
}

/// Symbolic determinant by cofactor expansion, simplified.
pub fn determinant(m: &ExprMatrix) -> Result<Expr, MatrixError> {
    if !m.is_square() {
        return Err(MatrixError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if m.rows > MAX_SYMBOLIC_SIDE {
        return Err(MatrixError::TooLarge { side: m.rows });
    }
    let idx: Vec<usize> = (0..m.rows).collect();
    Ok(cofactor_det(&m.entries, m.cols, &idx, &idx).simplify())
}

/// Ratios `s_{i,k} = dx_i / dx_k` along the constraint curve, held as
/// numerators over the shared denominator `Det S_k`.
#[derive(Clone, Debug)]
pub struct InfinitesimalCoeffs {
    pub axis: usize,
    /// Entry `i` is the numerator of `s_{i,k}`; entry `axis` equals the
    /// denominator.
    pub numerators: Vec<Expr>,
    pub denominator: Expr,
}

impl InfinitesimalCoeffs {
    pub fn nvars(&self) -> usize {
        self.numerators.len()
    }

    /// `s_{i,k}` as a single quotient expression.
    pub fn coefficient(&self, i: usize) -> Expr {
        if i == self.axis {
            return Expr::one();
        }
        (&self.numerators[i] / &self.denominator).simplify()
    }

    /// Numeric values of all `s_{i,k}` at `point`; `None` if `Det S_k`
    /// vanishes there.
    pub fn evaluate(&self, point: &[f64]) -> Result<Option<Vec<f64>>, EvalError> {
        let mut exprs = self.numerators.clone();
        exprs.push(self.denominator.clone());
        let vals = Tape::new(&exprs).eval(point)?;
        let den = vals[self.nvars()];
        if den == 0.0 {
            return Ok(None);
        }
        Ok(Some(
            (0..self.nvars())
                .map(|i| if i == self.axis { 1.0 } else { vals[i] / den })
                .collect(),
        ))
    }
}

/// Build `s_{i,k}` for all `i` from the constraint Jacobian:
/// numerator_i = -(adj(S_k) * column_k(Jg)) mapped back to variable `i`.
pub fn infinitesimal_coeffs(
    jg: &ExprMatrix,
    k: usize,
) -> Result<InfinitesimalCoeffs, MatrixError> {
    let s_k = constraint_matrix(jg, k)?;
    let m = s_k.rows;
    if m > MAX_SYMBOLIC_SIDE {
        return Err(MatrixError::TooLarge { side: m });
    }
    let idx: Vec<usize> = (0..m).collect();
    let denominator = cofactor_det(&s_k.entries, m, &idx, &idx).simplify();
    let adj = adjugate(&s_k.entries, m);
    let col = jg.column(k);
    let others: Vec<usize> = (0..jg.cols).filter(|&j| j != k).collect();
    let mut numerators = vec![Expr::zero(); jg.cols];
    for (pos, &var) in others.iter().enumerate() {
        let mut acc = Expr::zero();
        for l in 0..m {
            acc = CofactorRing::add(&acc, &CofactorRing::mul(&adj[pos * m + l], &col[l]));
        }
        numerators[var] = (-acc).simplify();
    }
    numerators[k] = denominator.clone();
    Ok(InfinitesimalCoeffs {
        axis: k,
        numerators,
        denominator,
    })
}
