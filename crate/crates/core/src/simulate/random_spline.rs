//! Random P-spline functions with a prescribed mean variance and a
//! prescribed share of that variance in the penalty null space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimulateError;
use crate::basis::spline::difference_matrix;
use crate::basis::SplineBasisDef;

/// Law of a random spline `r(t) = b̃(t)ᵀ Ω W θ` with `θ ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSplineDef {
    pub degree: usize,
    pub n_basis: usize,
    /// Order of the difference penalty; 0 puts every direction in the
    /// penalized part.
    pub diff_order: usize,
    /// Mean variance over the evaluation grid, `σ̄²`.
    pub scale: f64,
    /// Share of the mean variance in the penalty null space, `λ̸`.
    pub smoothness: f64,
    pub range: (f64, f64),
}

impl RandomSplineDef {
    pub fn new(
        degree: usize,
        n_basis: usize,
        diff_order: usize,
        scale: f64,
        smoothness: f64,
        range: (f64, f64),
    ) -> Result<Self, SimulateError> {
        let def = Self { degree, n_basis, diff_order, scale, smoothness, range };
        def.validate()?;
        Ok(def)
    }

    /// Cubic, second-order penalty, `λ̸ = 0.8`: the law of the true effects.
    pub fn effect(n_basis: usize, scale: f64, range: (f64, f64)) -> Result<Self, SimulateError> {
        Self::new(3, n_basis, 2, scale, 0.8, range)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.diff_order > self.degree {
            return Err(SimulateError::Dimension(format!(
                "difference order {} exceeds degree {}",
                self.diff_order, self.degree
            )));
        }
        if self.diff_order >= self.n_basis {
            return Err(SimulateError::Dimension(format!(
                "difference order {} must be below the basis size {}",
                self.diff_order, self.n_basis
            )));
        }
        if !(0.0..=1.0).contains(&self.smoothness) {
            return Err(SimulateError::Domain(format!("smoothness share {} outside [0, 1]", self.smoothness)));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(SimulateError::Domain(format!("scale {} must be nonnegative", self.scale)));
        }
        Ok(())
    }

    fn spline(&self) -> Result<SplineBasisDef, SimulateError> {
        Ok(SplineBasisDef::new(self.degree, self.n_basis, self.range)?)
    }

    /// `K×K` transform `Ω W` mapping standard normal coefficients to
    /// B-spline coefficients, with `W` calibrated on `points`.
    pub fn transform(&self, points: &[f64]) -> Result<DMatrix<f64>, SimulateError> {
        let b = self.spline()?.eval(points)?;
        let omega = build_omega(self.n_basis, self.diff_order)?;
        let w = build_weight_matrix(self.scale, self.smoothness, &(&b * &omega), self.diff_order)?;
        Ok(omega * DMatrix::from_diagonal(&w))
    }

    /// `B = B̃ Ω W` at `points` (G×K).
    pub fn basis(&self, points: &[f64]) -> Result<DMatrix<f64>, SimulateError> {
        let b = self.spline()?.eval(points)?;
        Ok(&b * self.transform(points)?)
    }
}

/// `Ω = [L : Dᵀ(DDᵀ)⁻¹]`, where `L` holds orthonormal polynomials of orders
/// `0..d` evaluated at `1..K` and `D` is the order-`d` difference matrix.
/// Then `ΩᵀDᵀDΩ` is diagonal with `d` leading zeros and ones elsewhere.
/// `d = 0` gives the identity.
pub fn build_omega(k: usize, d: usize) -> Result<DMatrix<f64>, SimulateError> {
    if k == 0 || d >= k {
        return Err(SimulateError::Dimension(format!("difference order {d} must be below the basis size {k}")));
    }
    let mut omega = DMatrix::zeros(k, k);
    if d > 0 {
        let mid = (k as f64 + 1.0) / 2.0;
        let vander = DMatrix::from_fn(k, d, |i, j| ((i + 1) as f64 - mid).powi(j as i32));
        let mut l = vander.clone().qr().q();
        for j in 0..d {
            // Fix the sign so that the leading coefficient is positive.
            let lead = (l.column(j).dot(&vander.column(j))).signum();
            if lead < 0.0 {
                l.column_mut(j).neg_mut();
            }
        }
        omega.columns_mut(0, d).copy_from(&l);
    }
    let dm = difference_matrix(k, d);
    let ddt = &dm * dm.transpose();
    let inv = ddt
        .cholesky()
        .ok_or_else(|| SimulateError::Dimension("difference matrix does not have full row rank".into()))?;
    let right = dm.transpose() * inv.inverse();
    omega.columns_mut(d, k - d).copy_from(&right);
    Ok(omega)
}

/// Diagonal of `W` such that `B = B̃ΩW` has mean variance
/// `(1/G) tr(BᵀB) = σ̄²` and null-space share `λ̸`.
///
/// The unpenalized weights are `σ̄² λ̸ / σ̄²_un` and the penalized ones
/// `σ̄² (1 − λ̸) / σ̄²_pe`, with `σ̄²_un`, `σ̄²_pe` the mean variances of the
/// two column blocks of `B̃Ω`.
pub fn build_weight_matrix(
    scale: f64,
    smoothness: f64,
    b_omega: &DMatrix<f64>,
    d: usize,
) -> Result<DVector<f64>, SimulateError> {
    let (g, k) = b_omega.shape();
    if d >= k || g == 0 {
        return Err(SimulateError::Dimension(format!("difference order {d} must be below the basis size {k}")));
    }
    if !(0.0..=1.0).contains(&smoothness) {
        return Err(SimulateError::Domain(format!("smoothness share {smoothness} outside [0, 1]")));
    }
    let col_ms = |range: std::ops::Range<usize>| -> f64 {
        range.map(|c| b_omega.column(c).norm_squared()).sum::<f64>() / g as f64
    };
    let var_un = col_ms(0..d);
    let var_pe = col_ms(d..k);
    let tiny = 1e-14 * (var_un + var_pe);
    if smoothness > 0.0 && !(var_un > tiny) {
        return Err(SimulateError::DegenerateSmoothness(format!(
            "share {smoothness} requested for an empty unpenalized part (d = {d})"
        )));
    }
    if smoothness < 1.0 && !(var_pe > tiny) {
        return Err(SimulateError::DegenerateSmoothness(format!(
            "share {smoothness} leaves variance for an empty penalized part"
        )));
    }
    let w_un = if smoothness > 0.0 { (scale * smoothness / var_un).sqrt() } else { 0.0 };
    let w_pe = if smoothness < 1.0 { (scale * (1.0 - smoothness) / var_pe).sqrt() } else { 0.0 };
    Ok(DVector::from_fn(k, |i, _| if i < d { w_un } else { w_pe }))
}

/// `n` independent draws of the random spline at `points` (n×G).
pub fn draw_random_spline<R: Rng + ?Sized>(
    def: &RandomSplineDef,
    points: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, SimulateError> {
    let b = def.basis(points)?;
    let theta = standard_normal_matrix(b.ncols(), n, rng);
    Ok((b * theta).transpose())
}

/// Matrix of i.i.d. standard normal entries, filled column by column.
pub(crate) fn standard_normal_matrix<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(r, c);
    for v in m.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}
