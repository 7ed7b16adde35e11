//! Response curves with prescribed pointwise distributions and a chosen
//! amount of within-curve dependence.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::random_spline::{standard_normal_matrix, RandomSplineDef};
use super::SimulateError;
use crate::families::std_normal_cdf;
use crate::families::Family;

/// Within-curve dependence of the error process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyLevel {
    /// Independent errors at every grid point.
    #[default]
    Independent,
    /// Cubic random spline with 20 basis functions and no penalty weighting.
    Dependent,
    /// Cubic random spline with 20 basis functions, first-order difference
    /// penalty and half the variance in constant shifts.
    HighDependency,
}

impl DependencyLevel {
    pub const ALL: [DependencyLevel; 3] =
        [DependencyLevel::Independent, DependencyLevel::Dependent, DependencyLevel::HighDependency];

    pub fn as_str(&self) -> &'static str {
        match self {
            DependencyLevel::Independent => "independent",
            DependencyLevel::Dependent => "dependent",
            DependencyLevel::HighDependency => "high_dependency",
        }
    }

    /// Random spline of the error process over `range`, `None` when the
    /// errors are independent.
    pub fn error_spline(&self, range: (f64, f64)) -> Option<RandomSplineDef> {
        let (d, share) = match self {
            DependencyLevel::Independent => return None,
            DependencyLevel::Dependent => (0, 0.0),
            DependencyLevel::HighDependency => (1, 0.5),
        };
        Some(RandomSplineDef { degree: 3, n_basis: 20, diff_order: d, scale: 1.0, smoothness: share, range })
    }
}

impl std::str::FromStr for DependencyLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DependencyLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown dependency level '{s}'"))
    }
}

/// `n×G` matrix of errors with standard normal marginals: white noise, or
/// random splines `r(t)` divided by their pointwise standard deviation.
pub fn standardized_errors<R: Rng + ?Sized>(
    level: DependencyLevel,
    t: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, SimulateError> {
    if t.len() < 2 {
        return Err(SimulateError::Dimension("error processes need at least 2 grid points".into()));
    }
    let range = (t[0], t[t.len() - 1]);
    match level.error_spline(range) {
        None => Ok(standard_normal_matrix(n, t.len(), rng)),
        Some(def) => {
            let b = def.basis(t)?;
            let sd: Vec<f64> = b.row_iter().map(|r| r.norm()).collect();
            if let Some(k) = sd.iter().position(|s| !(*s > 0.0)) {
                return Err(SimulateError::Domain(format!("error spline has zero variance at grid point {k}")));
            }
            let theta = standard_normal_matrix(b.ncols(), n, rng);
            let mut e = (b * theta).transpose();
            for (mut col, s) in e.column_iter_mut().zip(&sd) {
                col /= *s;
            }
            Ok(e)
        }
    }
}

/// Gaussian curves `y = μ + σ ε` with `ε` from [`standardized_errors`].
pub fn draw_gaussian_curves<R: Rng + ?Sized>(
    mu: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    level: DependencyLevel,
    t: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>, SimulateError> {
    if mu.shape() != sigma.shape() || mu.ncols() != t.len() {
        return Err(SimulateError::Dimension(format!(
            "mean {:?} and sd {:?} surfaces must both be N×{}",
            mu.shape(),
            sigma.shape(),
            t.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(SimulateError::Domain(format!("standard deviation {s} is not admissible")));
    }
    let e = standardized_errors(level, t, mu.nrows(), rng)?;
    Ok(mu + sigma.component_mul(&e))
}

/// Parameters at which curves can be drawn: the admissible region plus the
/// degenerate boundary cases with a well-defined quantile function.
fn can_sample(family: &dyn Family, theta: &[f64]) -> bool {
    if family.admissible(theta) {
        return true;
    }
    match family.id() {
        "gaussian" => theta[0].is_finite() && theta[1] == 0.0,
        "za-gamma" => theta[2] == 1.0 || (theta[2] == 0.0 && family.admissible(&[theta[0], theta[1], 0.5])),
        _ => false,
    }
}

/// Curves `y(t) = F⁻¹(Φ(ε(t)) | θ(t))` by inverse transform sampling;
/// `params[q]` holds the natural-scale parameter `q` (N×G).
pub fn draw_general_curves<R: Rng + ?Sized>(
    family: &dyn Family,
    params: &[DMatrix<f64>],
    level: DependencyLevel,
    t: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>, SimulateError> {
    let q = family.n_params();
    if params.len() != q {
        return Err(SimulateError::Dimension(format!(
            "family '{}' needs {q} parameter surfaces, got {}",
            family.id(),
            params.len()
        )));
    }
    let (n, g) = params[0].shape();
    if g != t.len() || params.iter().any(|p| p.shape() != (n, g)) {
        return Err(SimulateError::Dimension(format!("parameter surfaces must all be N×{}", t.len())));
    }
    let e = standardized_errors(level, t, n, rng)?;
    let mut y = DMatrix::zeros(n, g);
    let mut theta = vec![0.0; q];
    for i in 0..n {
        for k in 0..g {
            for (p, m) in params.iter().enumerate() {
                theta[p] = m[(i, k)];
            }
            if !can_sample(family, &theta) {
                return Err(SimulateError::Domain(format!(
                    "parameters {theta:?} of curve {i} at grid point {k} are outside the {} family",
                    family.id()
                )));
            }
            // Keep u inside (0, 1) so that the quantile stays finite.
            let u = std_normal_cdf(e[(i, k)]).clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
            y[(i, k)] = family.quantile(u, &theta);
        }
    }
    Ok(y)
}
