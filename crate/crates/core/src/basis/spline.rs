//! B-spline bases on equally spaced knots and their penalty matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::BasisError;

/// B-spline basis of degree `degree` with `n_basis` functions on `range`.
///
/// The `n_basis - degree + 1` knots are equally spaced over the range and
/// extended by `degree` knots on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineBasisDef {
    pub degree: usize,
    pub n_basis: usize,
    pub range: (f64, f64),
}

impl SplineBasisDef {
    pub fn new(degree: usize, n_basis: usize, range: (f64, f64)) -> Result<Self, BasisError> {
        if n_basis < degree + 1 {
            return Err(BasisError::Dimension(format!(
                "n_basis {n_basis} must be at least degree + 1 = {}",
                degree + 1
            )));
        }
        if !(range.1 > range.0) || !range.0.is_finite() || !range.1.is_finite() {
            return Err(BasisError::Dimension(format!("spline range [{}, {}] is empty", range.0, range.1)));
        }
        Ok(Self { degree, n_basis, range })
    }

    /// Full knot sequence, `n_basis + degree + 1` values.
    pub fn knots(&self) -> Vec<f64> {
        let (a, b) = self.range;
        let l = self.degree as isize;
        let intervals = (self.n_basis - self.degree) as f64;
        let h = (b - a) / intervals;
        (0..(self.n_basis + self.degree + 1) as isize).map(|j| a + (j - l) as f64 * h).collect()
    }

    /// Basis matrix with one row per point.
    pub fn eval(&self, points: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        eval_bspline_basis(self, points)
    }
}

/// Evaluates all basis functions at `points` by the Cox–de Boor recursion.
pub fn eval_bspline_basis(def: &SplineBasisDef, points: &[f64]) -> Result<DMatrix<f64>, BasisError> {
    let (a, b) = def.range;
    let tol = 1e-10 * (b - a);
    let knots = def.knots();
    let l = def.degree;
    let k = def.n_basis;
    let mut out = DMatrix::zeros(points.len(), k);
    let mut left = vec![0.0; l + 1];
    let mut right = vec![0.0; l + 1];
    let mut vals = vec![0.0; l + 1];
    for (p, &x0) in points.iter().enumerate() {
        if !(x0 >= a - tol && x0 <= b + tol) {
            return Err(BasisError::Range(format!("point {x0} outside [{a}, {b}]")));
        }
        let x = x0.clamp(a, b);
        // Knot span i with knots[i] <= x < knots[i + 1], i in [l, k - 1];
        // the right end point belongs to the last span.
        let h = (b - a) / (k - l) as f64;
        let mut span = l + (((x - a) / h).floor() as usize).min(k - l - 1);
        while span > l && x < knots[span] {
            span -= 1;
        }
        while span < k - 1 && x >= knots[span + 1] {
            span += 1;
        }
        vals[0] = 1.0;
        for j in 1..=l {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        for r in 0..=l {
            out[(p, span - l + r)] = vals[r];
        }
    }
    Ok(out)
}

/// `DᵀD` for the order-`d` difference operator `D` on `k` coefficients.
pub fn difference_penalty(k: usize, d: usize) -> Result<DMatrix<f64>, BasisError> {
    if d >= k {
        return Err(BasisError::Dimension(format!("difference order {d} must be below the basis size {k}")));
    }
    let dm = difference_matrix(k, d);
    Ok(dm.tr_mul(&dm))
}

/// The `(k − d)×k` order-`d` difference operator.
pub fn difference_matrix(k: usize, d: usize) -> DMatrix<f64> {
    let mut dm = DMatrix::<f64>::identity(k, k);
    for _ in 0..d {
        let r = dm.nrows();
        dm = DMatrix::from_fn(r - 1, k, |i, j| dm[(i + 1, j)] - dm[(i, j)]);
    }
    dm
}

/// Penalty kinds for one basis direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyDef {
    Difference { order: usize },
    Ridge,
    None,
}

impl PenaltyDef {
    pub fn matrix(&self, k: usize) -> Result<DMatrix<f64>, BasisError> {
        match *self {
            PenaltyDef::Difference { order: 0 } | PenaltyDef::Ridge => Ok(DMatrix::identity(k, k)),
            PenaltyDef::Difference { order } => difference_penalty(k, order),
            PenaltyDef::None => Ok(DMatrix::zeros(k, k)),
        }
    }
}
