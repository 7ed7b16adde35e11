//! Row tensor products and the two design layouts used by base-learners.
//!
//! Observations are ordered curve-major: row `i * G + g` holds curve `i` at
//! grid point `g`. Coefficients of a tensor block are ordered
//! `kx * K_Y + ky`, i.e. the covariate index varies slowest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BasisError;

/// Row-wise Kronecker product: row `i` of the result is `a_i ⊗ b_i`.
pub fn row_tensor(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, BasisError> {
    if a.nrows() != b.nrows() {
        return Err(BasisError::Dimension(format!(
            "row tensor needs equal row counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (m, r) = (a.ncols(), b.ncols());
    Ok(DMatrix::from_fn(a.nrows(), m * r, |i, c| a[(i, c / r)] * b[(i, c % r)]))
}

/// Materialized `Bx ⊗ By`, the (N·G)×(K_X·K_Y) design of a
/// time-independent covariate basis on a common grid.
pub fn kronecker_design(bx: &DMatrix<f64>, by: &DMatrix<f64>) -> DMatrix<f64> {
    bx.kronecker(by)
}

/// Design matrix of one base-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Design {
    /// `Bx ⊗ By`, kept as its factors.
    Kron { bx: DMatrix<f64>, by: DMatrix<f64> },
    /// Explicit (N·G)×K matrix, for terms whose covariate part varies in t.
    Dense { b: DMatrix<f64>, n: usize, g: usize },
}

impl Design {
    pub fn n_curves(&self) -> usize {
        match self {
            Design::Kron { bx, .. } => bx.nrows(),
            Design::Dense { n, .. } => *n,
        }
    }

    pub fn n_grid(&self) -> usize {
        match self {
            Design::Kron { by, .. } => by.nrows(),
            Design::Dense { g, .. } => *g,
        }
    }

    pub fn n_coef(&self) -> usize {
        match self {
            Design::Kron { bx, by } => bx.ncols() * by.ncols(),
            Design::Dense { b, .. } => b.ncols(),
        }
    }

    /// `BᵀB`.
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Design::Kron { bx, by } => bx.tr_mul(bx).kronecker(&by.tr_mul(by)),
            Design::Dense { b, .. } => b.tr_mul(b),
        }
    }

    /// `Bᵀu` for a response-shaped N×G matrix `u`.
    pub fn t_mul(&self, u: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Design::Kron { bx, by } => {
                let m = bx.tr_mul(u) * by;
                // Row-major flattening of the K_X×K_Y matrix.
                DVector::from_iterator(m.len(), m.transpose().iter().copied())
            }
            Design::Dense { b, .. } => {
                let flat = DVector::from_iterator(u.len(), u.transpose().iter().copied());
                b.tr_mul(&flat)
            }
        }
    }

    /// `Bθ` reshaped to N×G.
    pub fn mul(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Design::Kron { bx, by } => {
                let coef = DMatrix::from_row_slice(bx.ncols(), by.ncols(), theta.as_slice());
                bx * coef * by.transpose()
            }
            Design::Dense { b, n, g } => {
                let v = b * theta;
                DMatrix::from_row_slice(*n, *g, v.as_slice())
            }
        }
    }

    /// The same design restricted to the given curves (repetitions allowed).
    pub fn select_curves(&self, rows: &[usize]) -> Design {
        match self {
            Design::Kron { bx, by } => Design::Kron { bx: bx.select_rows(rows), by: by.clone() },
            Design::Dense { b, g, .. } => {
                let idx: Vec<usize> = rows.iter().flat_map(|&i| (i * g)..(i * g + g)).collect();
                Design::Dense { b: b.select_rows(&idx), n: rows.len(), g: *g }
            }
        }
    }

    /// The explicit (N·G)×K matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            Design::Kron { bx, by } => kronecker_design(bx, by),
            Design::Dense { b, .. } => b.clone(),
        }
    }
}
