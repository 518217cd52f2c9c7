//! Interpolation of matrix-valued polynomials.
//!
//! Every answer a server returns is the evaluation of a polynomial whose
//! coefficients are matrices. Decoding recovers those coefficients entrywise
//! through the Lagrange basis: for points `x_0..x_d` we expand each basis
//! polynomial `L_i(x)` into monomial coefficients once, then every output
//! coefficient is `c_k = sum_i L_i[k] * Z_i`.

use thiserror::Error;

use crate::field::{FieldError, PrimeField};
use crate::linalg::{FieldMatrix, MatrixError};

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("no evaluations supplied")]
    Empty,
    #[error("{points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error("evaluation point {0} repeats")]
    DuplicatePoint(u64),
    #[error("evaluation points must be nonzero")]
    ZeroPoint,
    #[error("value {index} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("requested degree {degree} exceeds polynomial degree {max}")]
    DegreeOutOfRange { degree: usize, max: usize },
    #[error("singular Vandermonde system (zero pivot at point {0})")]
    Singular(u64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Distinct nonzero points paired with the matrices observed there.
#[derive(Debug, Clone)]
pub struct EvaluationSet {
    field: PrimeField,
    points: Vec<u64>,
    values: Vec<FieldMatrix>,
}

impl EvaluationSet {
    pub fn new(points: Vec<u64>, values: Vec<FieldMatrix>) -> Result<Self, InterpError> {
        if points.len() != values.len() {
            return Err(InterpError::LengthMismatch {
                points: points.len(),
                values: values.len(),
            });
        }
        let first = values.first().ok_or(InterpError::Empty)?;
        let field = first.field();
        let (h, w) = first.shape();
        for (index, v) in values.iter().enumerate() {
            field.ensure_same(&v.field())?;
            if v.shape() != (h, w) {
                return Err(InterpError::ShapeMismatch {
                    index,
                    rows: v.rows(),
                    cols: v.cols(),
                    expected_rows: h,
                    expected_cols: w,
                });
            }
        }
        let points: Vec<u64> = points.into_iter().map(|p| field.reduce(p)).collect();
        let mut seen = std::collections::HashSet::with_capacity(points.len());
        for &p in &points {
            if p == 0 {
                return Err(InterpError::ZeroPoint);
            }
            if !seen.insert(p) {
                return Err(InterpError::DuplicatePoint(p));
            }
        }
        Ok(Self {
            field,
            points,
            values,
        })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn points(&self) -> &[u64] {
        &self.points
    }

    pub fn values(&self) -> &[FieldMatrix] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Degree of the unique interpolating polynomial's coefficient space.
    pub fn max_degree(&self) -> usize {
        self.points.len() - 1
    }
}

/// Monomial coefficients of every Lagrange basis polynomial over `points`:
/// `basis[i][k]` is the coefficient of `x^k` in `L_i`.
pub fn lagrange_basis(field: PrimeField, points: &[u64]) -> Result<Vec<Vec<u64>>, InterpError> {
    let n = points.len();
    // master(x) = prod_j (x - x_j), low degree first.
    let mut master = vec![0u64; n + 1];
    master[0] = 1 % field.modulus();
    for (deg, &xj) in points.iter().enumerate() {
        let neg = field.neg_raw(xj);
        for k in (0..=deg + 1).rev() {
            let shifted = if k > 0 { master[k - 1] } else { 0 };
            master[k] = field.add_raw(shifted, field.mul_raw(master[k], neg));
        }
    }
    let mut basis = Vec::with_capacity(n);
    for &xi in points {
        // Synthetic division of master by (x - x_i).
        let mut quotient = vec![0u64; n];
        let mut carry = 0u64;
        for k in (0..n).rev() {
            carry = field.add_raw(master[k + 1], field.mul_raw(carry, xi));
            quotient[k] = carry;
        }
        // quotient(x_i) = prod_{j != i} (x_i - x_j), the Vandermonde pivot.
        let denom = quotient
            .iter()
            .rev()
            .fold(0u64, |acc, &c| field.add_raw(field.mul_raw(acc, xi), c));
        if denom == 0 {
            return Err(InterpError::Singular(xi));
        }
        let inv = field.inv_raw(denom)?;
        for c in &mut quotient {
            *c = field.mul_raw(*c, inv);
        }
        basis.push(quotient);
    }
    Ok(basis)
}

fn combine(ev: &EvaluationSet, basis: &[Vec<u64>], degree: usize) -> Result<FieldMatrix, InterpError> {
    let first = &ev.values[0];
    let mut acc = FieldMatrix::zeros(ev.field, first.rows(), first.cols());
    for (value, b) in ev.values.iter().zip(basis) {
        acc.axpy_assign(b[degree], value)?;
    }
    Ok(acc)
}

/// Recovers all `|points|` coefficient matrices, lowest degree first.
pub fn interpolate_all(ev: &EvaluationSet) -> Result<Vec<FieldMatrix>, InterpError> {
    let basis = lagrange_basis(ev.field, &ev.points)?;
    (0..ev.len()).map(|k| combine(ev, &basis, k)).collect()
}

/// Recovers only the coefficients at `wanted` degrees, in the order given.
pub fn interpolate_subset(
    ev: &EvaluationSet,
    wanted: &[usize],
) -> Result<Vec<FieldMatrix>, InterpError> {
    let max = ev.max_degree();
    if let Some(&degree) = wanted.iter().find(|&&d| d > max) {
        return Err(InterpError::DegreeOutOfRange { degree, max });
    }
    let basis = lagrange_basis(ev.field, &ev.points)?;
    wanted.iter().map(|&k| combine(ev, &basis, k)).collect()
}

/// Horner evaluation of `sum_k coeffs[k] * x^k`.
pub fn evaluate(coeffs: &[FieldMatrix], x: u64) -> Result<FieldMatrix, InterpError> {
    let last = coeffs.last().ok_or(InterpError::Empty)?;
    let field = last.field();
    let x = field.reduce(x);
    let mut acc = last.clone();
    for c in coeffs.iter().rev().skip(1) {
        let mut next = c.clone();
        next.axpy_assign(x, &acc)?;
        acc = next;
    }
    Ok(acc)
}
