//! Smoothing-parameter calibration from target degrees of freedom.

use nalgebra::{DMatrix, SymmetricEigen};

use super::BasisError;

/// Tolerance on the achieved degrees of freedom.
pub const DF_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;

/// Numerical rank of a symmetric positive semidefinite matrix.
pub fn psd_rank(m: &DMatrix<f64>) -> usize {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let top = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if top == 0.0 {
        return 0;
    }
    eig.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// `tr((F + λP)⁻ F)`, the trace of the hat matrix of a penalized
/// least-squares fit with Gram matrix `F`. A pseudo-inverse is used when
/// `F + λP` is singular.
pub fn hat_trace(gram: &DMatrix<f64>, penalty: &DMatrix<f64>, lambda: f64) -> f64 {
    let m = gram + penalty * lambda;
    if let Some(ch) = m.clone().cholesky() {
        return ch.solve(gram).trace();
    }
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut inv = DMatrix::zeros(gram.nrows(), gram.ncols());
    for (k, &v) in eig.eigenvalues.iter().enumerate() {
        if v > 1e-12 * top {
            let col = eig.eigenvectors.column(k);
            inv += col * col.transpose() / v;
        }
    }
    (inv * gram).trace()
}

/// Finds `λ ≥ 0` with `tr((F + λP)⁻¹F) = df`.
///
/// The problem is reduced to the eigenvalues `a_k ∈ [0, 1]` of
/// `L⁻¹FL⁻ᵀ` with `LLᵀ = F + cP`, for which `df(μ) = Σ a_k / (a_k + μ(1 − a_k))`
/// and `λ = cμ`. The scalar equation is solved by bisection on `ln μ`.
pub fn df_to_lambda(gram: &DMatrix<f64>, penalty: &DMatrix<f64>, df: f64) -> Result<f64, BasisError> {
    let k = gram.nrows();
    let rank = psd_rank(gram) as f64;
    if (df - rank).abs() <= 1e-9 {
        return Ok(0.0);
    }
    if df > rank {
        return Err(BasisError::InfeasibleDf(format!("df {df} exceeds the design rank {rank}")));
    }
    let tr_p = penalty.trace();
    if !(tr_p > 0.0) {
        return Err(BasisError::InfeasibleDf(format!("df {df} below the rank {rank} of an unpenalized design")));
    }
    let c = gram.trace() / tr_p;
    let scaled = penalty * c;
    let mut m = gram + &scaled;
    let chol = match m.clone().cholesky() {
        Some(ch) => ch,
        None => {
            // Shared null space of design and penalty: those directions
            // carry no degrees of freedom, so a tiny ridge leaves df intact.
            let eps = 1e-10 * m.trace() / k as f64;
            for i in 0..k {
                m[(i, i)] += eps;
            }
            m.cholesky()
                .ok_or_else(|| BasisError::InfeasibleDf("design plus penalty is not positive semidefinite".into()))?
        }
    };
    let l_inv =
        chol.l().try_inverse().ok_or_else(|| BasisError::InfeasibleDf("ill-conditioned design plus penalty".into()))?;
    let a_mat = &l_inv * gram * l_inv.transpose();
    let a: Vec<f64> =
        SymmetricEigen::new((&a_mat + a_mat.transpose()) * 0.5).eigenvalues.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let df_at = |log_mu: f64| -> f64 {
        let mu = log_mu.exp();
        a.iter().map(|&ak| if ak == 0.0 { 0.0 } else { ak / (ak + mu * (1.0 - ak)) }).sum()
    };
    let df_inf: f64 = a.iter().filter(|&&v| v > 1.0 - 1e-9).count() as f64;
    if df <= df_inf + 1e-9 {
        return Err(BasisError::InfeasibleDf(format!(
            "df {df} does not exceed the penalty null-space dimension {df_inf}"
        )));
    }
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    while df_at(lo) < df && lo > -700.0 {
        lo -= 30.0;
    }
    while df_at(hi) > df && hi < 700.0 {
        hi += 30.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let v = df_at(mid);
        if (v - df).abs() < 1e-11 {
            break;
        }
        if v > df {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = c * mid.exp();
    let achieved = hat_trace(gram, penalty, lambda);
    if (achieved - df).abs() > DF_TOL {
        log::warn!("df calibration reached {achieved} for target {df}");
    }
    Ok(lambda)
}
