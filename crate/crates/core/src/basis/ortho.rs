//! Identifiability constraints via null-space reparametrization.

use nalgebra::DMatrix;

use super::BasisError;

/// Orthonormal basis of the column space of `c`, found by column-pivoted
/// Gram–Schmidt. Columns whose residual falls below a relative tolerance are
/// dropped as linearly dependent.
pub fn pruned_column_basis(c: &DMatrix<f64>) -> DMatrix<f64> {
    let k = c.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = c.column_iter().map(|v| v.into_owned()).collect();
    let scale = cols.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    if scale == 0.0 {
        return DMatrix::zeros(k, 0);
    }
    let tol = 1e-9 * scale;
    while !cols.is_empty() && basis.len() < k {
        let (best, norm) =
            cols.iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if norm <= tol {
            break;
        }
        let q = cols.swap_remove(best) / norm;
        for v in cols.iter_mut() {
            // Two passes of projection keep the basis orthogonal to rounding.
            for _ in 0..2 {
                let d = q.dot(v);
                v.axpy(-d, &q, 1.0);
            }
        }
        basis.push(q);
    }
    if basis.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Orthonormal `K×(K−r)` basis of the orthogonal complement of the column
/// space of `c` (K×C), where `r` is its numerical rank.
pub fn null_space_of_transpose(c: &DMatrix<f64>) -> DMatrix<f64> {
    let k = c.nrows();
    let q_r = pruned_column_basis(c);
    let r = q_r.ncols();
    if r == 0 {
        return DMatrix::identity(k, k);
    }
    // Householder QR of [Q_r : I] puts span(Q_r) in the leading r columns
    // of Q; the trailing columns complete an orthonormal basis.
    let mut aug = DMatrix::zeros(k, r + k);
    aug.columns_mut(0, r).copy_from(&q_r);
    aug.columns_mut(r, k).fill_with_identity();
    let q = aug.qr().q();
    q.columns(r, k - r).into_owned()
}

/// Reparametrizes `b_full` so that its columns are orthogonal to
/// `constraints`: returns `Z` and `B = B_full Z` with `Bᵀ constraints = 0`.
pub fn orthogonalize(
    b_full: &DMatrix<f64>,
    constraints: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), BasisError> {
    if b_full.nrows() != constraints.nrows() {
        return Err(BasisError::Dimension(format!(
            "basis has {} rows, constraints {}",
            b_full.nrows(),
            constraints.nrows()
        )));
    }
    let k = b_full.ncols();
    let c = b_full.tr_mul(constraints);
    let rank = pruned_column_basis(&c).ncols();
    if rank >= k {
        return Err(BasisError::EmptyBasis(format!("constraints of rank {rank} leave nothing of a {k}-column basis")));
    }
    let z = null_space_of_transpose(&c);
    let b = b_full * &z;
    Ok((z, b))
}
