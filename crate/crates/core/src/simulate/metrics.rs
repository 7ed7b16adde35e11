//! Goodness-of-fit measures against a known truth.

use nalgebra::DMatrix;

use super::SimulateError;
use crate::basis::EffectSurface;
use crate::families::{mean_kld_cells, Family};

/// Mean of the pointwise KLD from the true to the estimated distribution
/// over all N·G cells; `truth[q]`, `est[q]` are natural-scale parameters.
pub fn mean_kld(family: &dyn Family, truth: &[DMatrix<f64>], est: &[DMatrix<f64>]) -> Result<f64, SimulateError> {
    let q = family.n_params();
    if truth.len() != q || est.len() != q {
        return Err(SimulateError::Dimension(format!(
            "family '{}' needs {q} parameter surfaces, got {} and {}",
            family.id(),
            truth.len(),
            est.len()
        )));
    }
    let shape = truth[0].shape();
    if truth.iter().chain(est).any(|m| m.shape() != shape) {
        return Err(SimulateError::Dimension("true and estimated surfaces differ in shape".into()));
    }
    if shape.0 * shape.1 == 0 {
        return Err(SimulateError::Dimension("no cells to compare".into()));
    }
    let t: Vec<&[f64]> = truth.iter().map(|m| m.as_slice()).collect();
    let e: Vec<&[f64]> = est.iter().map(|m| m.as_slice()).collect();
    Ok(mean_kld_cells(family, &t, &e))
}

fn paired_cells<'a>(
    truth: &'a EffectSurface,
    est: &'a EffectSurface,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a, SimulateError> {
    if !truth.same_axes(est) || truth.values.len() != est.values.len() {
        return Err(SimulateError::Dimension(format!(
            "surfaces '{}' and '{}' are not on a common grid",
            truth.term, est.term
        )));
    }
    // Cells outside a historical effect's domain are NaN on both sides.
    Ok(truth.values.iter().zip(&est.values).map(|(a, b)| (*a, *b)).filter(|(a, _)| !a.is_nan()))
}

/// Root mean squared difference over the cells of a common grid.
pub fn effect_rmse(truth: &EffectSurface, est: &EffectSurface) -> Result<f64, SimulateError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in paired_cells(truth, est)? {
        sum += (a - b).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(SimulateError::Dimension(format!("surface '{}' has no defined cells", truth.term)));
    }
    Ok((sum / n as f64).sqrt())
}

/// RMSE divided by the range of the true surface.
pub fn effect_relrmse(truth: &EffectSurface, est: &EffectSurface) -> Result<f64, SimulateError> {
    let rmse = effect_rmse(truth, est)?;
    let (lo, hi, scale) = truth
        .values
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0f64), |(lo, hi, s), &v| (lo.min(v), hi.max(v), s.max(v.abs())));
    let range = hi - lo;
    if !(range > 1e-12 * scale) {
        return Err(SimulateError::RangeZero(truth.term.clone()));
    }
    Ok(rmse / range)
}
