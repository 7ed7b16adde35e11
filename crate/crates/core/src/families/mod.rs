//! Response distributions: links, pointwise loss, gradients, quantiles and
//! Kullback–Leibler divergences.

mod gamma;
mod gaussian;
mod zagamma;

use std::fmt::Debug;

use thiserror::Error;

pub use gamma::{gamma_cdf, gamma_kld, gamma_quantile, GammaCv};
pub use gaussian::{std_normal_cdf, std_normal_quantile, Gaussian};
pub use zagamma::ZaGamma;

/// Largest parameter count among the shipped families.
pub const MAX_PARAMS: usize = 3;

/// Clamping range for positive parameters (σ, μ, c) in loss evaluation.
pub const POS_MIN: f64 = 1e-10;
pub const POS_MAX: f64 = 1e10;
/// Clamping range for probabilities in loss evaluation.
pub const PROB_MIN: f64 = 1e-10;
pub const PROB_MAX: f64 = 1.0 - 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("response value {0} outside the support of family '{1}'")]
    Support(f64, &'static str),
    #[error("parameter out of the admissible region: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("unknown family '{0}' (expected gaussian, gamma-cv or za-gamma)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Link {
    pub fn link(&self, theta: f64) -> f64 {
        match self {
            Link::Identity => theta,
            Link::Log => theta.ln(),
            Link::Logit => (theta / (1.0 - theta)).ln(),
        }
    }

    pub fn inverse(&self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Inverse link followed by clamping into the numerically safe region.
    pub fn inverse_clamped(&self, eta: f64) -> f64 {
        let v = self.inverse(eta);
        match self {
            Link::Identity => v,
            Link::Log => v.clamp(POS_MIN, POS_MAX),
            Link::Logit => v.clamp(PROB_MIN, PROB_MAX),
        }
    }
}

/// A Q-parameter response distribution.
///
/// Predictors `h` are on the link scale; parameters `theta` are on the
/// natural scale, in the order of [`Family::param_names`].
pub trait Family: Debug + Send + Sync {
    fn id(&self) -> &'static str;
    fn param_names(&self) -> &'static [&'static str];
    fn links(&self) -> &'static [Link];

    fn n_params(&self) -> usize {
        self.links().len()
    }

    fn check_support(&self, y: f64) -> Result<(), FamilyError>;

    /// Negative log-density `ρ(y, h)`, with the implied parameters clamped
    /// into the admissible region.
    fn loss(&self, y: f64, h: &[f64]) -> f64;

    /// Negative partial derivative `−∂ρ/∂h_q` at the unclamped predictors.
    fn neg_gradient(&self, q: usize, y: f64, h: &[f64]) -> f64;

    fn cdf(&self, y: f64, theta: &[f64]) -> f64;

    fn quantile(&self, u: f64, theta: &[f64]) -> f64;

    /// `KL(F_true ‖ F_est)`.
    fn kld(&self, theta_true: &[f64], theta_est: &[f64]) -> f64;

    /// Marginal-moment starting values on the predictor scale.
    fn moment_offsets(&self, y: &[f64]) -> Result<Vec<f64>, FamilyError>;

    /// Whether natural-scale parameters lie in the admissible region.
    fn admissible(&self, theta: &[f64]) -> bool;

    /// Natural-scale parameters implied by predictors (clamped).
    fn params(&self, h: &[f64]) -> Vec<f64> {
        self.links().iter().zip(h).map(|(l, &e)| l.inverse_clamped(e)).collect()
    }

    /// Predictors implied by natural-scale parameters.
    fn predictors(&self, theta: &[f64]) -> Vec<f64> {
        self.links().iter().zip(theta).map(|(l, &t)| l.link(t)).collect()
    }
}

pub static GAUSSIAN: Gaussian = Gaussian;
pub static GAMMA_CV: GammaCv = GammaCv;
pub static ZA_GAMMA: ZaGamma = ZaGamma;

pub fn gaussian_family() -> &'static dyn Family {
    &GAUSSIAN
}

pub fn gamma_cv_family() -> &'static dyn Family {
    &GAMMA_CV
}

pub fn zero_adjusted_gamma_family() -> &'static dyn Family {
    &ZA_GAMMA
}

/// Looks a family up by its configuration id.
pub fn family_by_id(id: &str) -> Result<&'static dyn Family, FamilyError> {
    match id {
        "gaussian" => Ok(&GAUSSIAN),
        "gamma-cv" => Ok(&GAMMA_CV),
        "za-gamma" => Ok(&ZA_GAMMA),
        other => Err(FamilyError::Unknown(other.to_string())),
    }
}

/// `Σ_t ρ(y(t), h(t))` for one curve; `h[q]` holds the q-th predictor curve.
pub fn empirical_loss(family: &dyn Family, y: &[f64], h: &[&[f64]]) -> Result<f64, FamilyError> {
    let q = family.n_params();
    if h.len() != q || h.iter().any(|c| c.len() != y.len()) {
        return Err(FamilyError::Domain(format!("expected {q} predictor curves of length {}", y.len())));
    }
    let mut buf = [0.0; MAX_PARAMS];
    let mut total = 0.0;
    for (k, &yk) in y.iter().enumerate() {
        family.check_support(yk)?;
        for (p, curve) in h.iter().enumerate() {
            let v = curve[k];
            if !v.is_finite() {
                return Err(FamilyError::Domain(format!(
                    "predictor {} is {v} at grid point {k}",
                    family.param_names()[p]
                )));
            }
            buf[p] = v;
        }
        total += family.loss(yk, &buf[..q]);
    }
    Ok(total)
}

/// Mean of the pointwise KLD over matching cells of parameter surfaces;
/// `truth[q]` and `est[q]` hold the q-th parameter at every cell.
pub fn mean_kld_cells(family: &dyn Family, truth: &[&[f64]], est: &[&[f64]]) -> f64 {
    let q = family.n_params();
    let n = truth[0].len();
    let mut a = [0.0; MAX_PARAMS];
    let mut b = [0.0; MAX_PARAMS];
    let mut total = 0.0;
    for c in 0..n {
        for p in 0..q {
            a[p] = truth[p][c];
            b[p] = est[p][c];
        }
        total += family.kld(&a[..q], &b[..q]);
    }
    total / n as f64
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for nondecreasing `f`,
/// using Newton steps safeguarded by bisection.
pub(crate) fn monotone_solve(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
) -> f64 {
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let v = f(x) - target;
        if v == 0.0 {
            return x;
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - v / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn links_invert() {
        for &t in &[1e-8, 0.3, 0.5, 0.999, 5.0, 1e6] {
            assert!((Link::Log.inverse(Link::Log.link(t)) - t).abs() <= 1e-12 * t.max(1.0));
            assert!((Link::Identity.inverse(Link::Identity.link(t)) - t).abs() == 0.0);
        }
        for &p in &[1e-9, 0.01, 0.5, 0.99, 1.0 - 1e-9] {
            assert!((Link::Logit.inverse(Link::Logit.link(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn registry() {
        for id in ["gaussian", "gamma-cv", "za-gamma"] {
            assert_eq!(family_by_id(id).unwrap().id(), id);
        }
        assert!(matches!(family_by_id("poisson"), Err(FamilyError::Unknown(_))));
    }

    #[test]
    fn empirical_loss_examples() {
        let f = gaussian_family();
        let y = [1.0, 2.0, 3.0];
        let zero = [0.0; 3];
        let l = empirical_loss(f, &y, &[&y, &zero]).unwrap();
        assert!((l - 3.0 * 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let one = empirical_loss(f, &y[..1], &[&[0.5], &[0.2]]).unwrap();
        assert!((one - f.loss(1.0, &[0.5, 0.2])).abs() == 0.0);
        assert!(matches!(empirical_loss(f, &y[..1], &[&[f64::NAN], &[0.0]]), Err(FamilyError::Domain(_))));
        assert!(matches!(empirical_loss(gamma_cv_family(), &[0.0], &[&[0.0], &[0.0]]), Err(FamilyError::Support(..))));
    }

    #[test]
    fn empirical_loss_equals_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f = zero_adjusted_gamma_family();
        let g = 25;
        let y: Vec<f64> = (0..g).map(|k| if k % 4 == 0 { 0.0 } else { rng.random_range(0.1..5.0) }).collect();
        let h: Vec<Vec<f64>> = (0..3).map(|_| (0..g).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = h.iter().map(|v| v.as_slice()).collect();
        let mut naive = 0.0;
        for k in 0..g {
            naive += f.loss(y[k], &[h[0][k], h[1][k], h[2][k]]);
        }
        assert!((empirical_loss(f, &y, &refs).unwrap() - naive).abs() < 1e-12);
    }
}
